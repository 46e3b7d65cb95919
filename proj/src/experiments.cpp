#include "rtsom/experiments.hpp"

#include "rtsom/errors.hpp"

#include <spdlog/spdlog.h>

#include <bit>
#include <chrono>
#include <cmath>
#include <random>

namespace rtsom {

void ExperimentSpec::validate() const
{
    if (forward_factor < 2) throw InvalidArgument("experiment '" + name + "': forward mesh factor must be >= 2");
    if (forward_ns < ns) throw InvalidArgument("experiment '" + name + "': forward NS must not be below inversion NS");
    if (nx < 2 || ny < 2) throw InvalidArgument("experiment '" + name + "': inversion mesh needs at least 2x2 cells");
    if (sources < 1 || detectors < 1) throw InvalidArgument("experiment '" + name + "': need sources and detectors");
    for (double gamma : noise_levels)
        if (!(gamma >= 0.0)) throw InvalidArgument("experiment '" + name + "': noise levels must be >= 0");
}

Mesh inversion_mesh(const ExperimentSpec& spec) { return build_mesh(spec.nx, spec.ny, spec.domain, spec.detectors, spec.sources); }

Mesh forward_mesh(const ExperimentSpec& spec)
{
    return build_mesh(spec.nx * spec.forward_factor, spec.ny * spec.forward_factor, spec.domain, spec.detectors,
                      spec.sources);
}

AngularGrid inversion_angular(const ExperimentSpec& spec) { return build_angular(spec.ns, spec.g); }
AngularGrid forward_angular(const ExperimentSpec& spec) { return build_angular(spec.forward_ns, spec.g); }

std::vector<Eigen::VectorXd> generate_synthetic_data(const ExperimentSpec& spec, const ForwardOptions& options)
{
    spec.validate();
    const Mesh mesh = forward_mesh(spec);
    const AngularGrid angular = forward_angular(spec);
    const OpticalField field = rasterize_phantom(spec.phantom, mesh);
    std::vector<Eigen::VectorXd> data(spec.sources);
    for (std::size_t q = 0; q < spec.sources; ++q) {
        const ForwardSolution sol = solve_forward(field, angular, mesh, q, options);
        data[q] = measure_current(sol.u, mesh, angular);
        spdlog::debug("forward source {}: {} sweeps, last update {:.2e}", q, sol.sweeps, sol.last_update);
    }
    return data;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t noise_seed(std::uint64_t base, double gamma_percent, std::size_t stream)
{
    std::uint64_t s = splitmix64(base);
    s = splitmix64(s ^ std::bit_cast<std::uint64_t>(gamma_percent));
    return splitmix64(s ^ static_cast<std::uint64_t>(stream));
}

Eigen::VectorXd add_noise(const Eigen::VectorXd& data, double gamma_percent, std::uint64_t seed)
{
    if (!(gamma_percent >= 0.0)) throw InvalidArgument("add_noise: gamma must be >= 0");
    if (gamma_percent == 0.0) return data;
    std::mt19937_64 gen(seed);
    Eigen::VectorXd out = data;
    const double amp = gamma_percent * 1e-2;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double unit = static_cast<double>(gen() >> 11) * 0x1.0p-53;
        out[i] *= 1.0 + amp * (2.0 * unit - 1.0);
    }
    return out;
}

std::vector<Eigen::VectorXd> add_noise(const std::vector<Eigen::VectorXd>& data, double gamma_percent,
                                       std::uint64_t base_seed)
{
    std::vector<Eigen::VectorXd> out;
    out.reserve(data.size());
    for (std::size_t q = 0; q < data.size(); ++q)
        out.push_back(add_noise(data[q], gamma_percent, noise_seed(base_seed, gamma_percent, q)));
    return out;
}

Eigen::VectorXd restrict_to_inversion_mesh(const Eigen::VectorXd& fine, const Mesh& fine_mesh, const Mesh& coarse_mesh)
{
    const auto& a = fine_mesh.domain;
    const auto& b = coarse_mesh.domain;
    const double tol = 1e-12 * std::max(a.width(), a.height());
    if (std::abs(a.x0 - b.x0) > tol || std::abs(a.y0 - b.y0) > tol || std::abs(a.x1 - b.x1) > tol ||
        std::abs(a.y1 - b.y1) > tol)
        throw InvalidArgument("restrict: meshes cover different domains");
    if (coarse_mesh.nx == 0 || coarse_mesh.ny == 0 || fine_mesh.nx % coarse_mesh.nx || fine_mesh.ny % coarse_mesh.ny)
        throw InvalidArgument("restrict: fine mesh " + std::to_string(fine_mesh.nx) + "x" + std::to_string(fine_mesh.ny) +
                              " is not an integer refinement of " + std::to_string(coarse_mesh.nx) + "x" +
                              std::to_string(coarse_mesh.ny));
    if (static_cast<std::size_t>(fine.size()) != fine_mesh.num_cells())
        throw InvalidArgument("restrict: field does not match the fine mesh");

    const std::size_t fx = fine_mesh.nx / coarse_mesh.nx, fy = fine_mesh.ny / coarse_mesh.ny;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(coarse_mesh.num_cells()));
    Eigen::VectorXd vol = Eigen::VectorXd::Zero(out.size());
    for (std::size_t j = 0; j < fine_mesh.ny; ++j)
        for (std::size_t i = 0; i < fine_mesh.nx; ++i) {
            const std::size_t m = fine_mesh.cell_index(i, j);
            const auto c = static_cast<Eigen::Index>(coarse_mesh.cell_index(i / fx, j / fy));
            out[c] += fine_mesh.cell_volumes[m] * fine[static_cast<Eigen::Index>(m)];
            vol[c] += fine_mesh.cell_volumes[m];
        }
    return out.cwiseQuotient(vol);
}

OpticalField restrict_to_inversion_mesh(const OpticalField& fine, const Mesh& fine_mesh, const Mesh& coarse_mesh)
{
    return {restrict_to_inversion_mesh(fine.sigma_a, fine_mesh, coarse_mesh),
            restrict_to_inversion_mesh(fine.sigma_s, fine_mesh, coarse_mesh)};
}

double relative_l2_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth, const Mesh& mesh)
{
    const auto n = static_cast<Eigen::Index>(mesh.num_cells());
    if (estimate.size() != n || truth.size() != n) throw InvalidArgument("relative_l2_error: size mismatch");
    const Eigen::Map<const Eigen::VectorXd> vol(mesh.cell_volumes.data(), n);
    const double den = truth.cwiseAbs2().dot(vol);
    if (!(den > 0.0)) throw InvalidArgument("relative_l2_error: truth has zero norm");
    return std::sqrt((estimate - truth).cwiseAbs2().dot(vol) / den);
}

PhantomSpec canonical_phantom(int experiment)
{
    PhantomSpec p;
    p.background_a = 0.1;
    p.background_s = 8.0;
    switch (experiment) {
    case 1: p.inclusions.push_back({Disk{{1.0, 1.0}, 0.3}, 0.2, 8.0}); break;
    case 2: p.inclusions.push_back({AxisRect{{0.5, 0.8}, {1.5, 1.2}}, 0.2, 8.0}); break;
    case 3:
        p.inclusions.push_back({AxisRect{{0.5, 0.5}, {0.8, 1.5}}, 0.2, 8.0});
        p.inclusions.push_back({AxisRect{{0.5, 0.5}, {1.5, 0.8}}, 0.2, 8.0});
        break;
    case 4:
        p.inclusions.push_back({Disk{{1.3, 1.4}, 0.3}, 0.2, 8.0});
        p.inclusions.push_back({Disk{{0.7, 0.7}, 0.3}, 0.1, 16.0});
        break;
    default: throw InvalidArgument("canonical_phantom: experiment must be 1..4, got " + std::to_string(experiment));
    }
    return p;
}

ExperimentSpec canonical_experiment(int experiment)
{
    ExperimentSpec spec;
    spec.name = "experiment" + std::to_string(experiment);
    spec.phantom = canonical_phantom(experiment);
    spec.mode = experiment == 4 ? Mode::scattering : Mode::absorption;
    spec.noise_levels = {0.0, 3.0, 10.0};
    return spec;
}

InversionTruth inversion_truth(const ExperimentSpec& spec)
{
    const Mesh fine = forward_mesh(spec);
    const Mesh coarse = inversion_mesh(spec);
    InversionTruth t;
    t.field = restrict_to_inversion_mesh(rasterize_phantom(spec.phantom, fine), fine, coarse);
    t.unknown = spec.mode == Mode::absorption ? t.field.sigma_a : t.field.sigma_s;
    return t;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentSpec& spec, const ReconConfig& config, const SvdCache* cache)
{
    spec.validate();
    ExperimentOutcome out;
    auto t0 = std::chrono::steady_clock::now();
    const std::vector<Eigen::VectorXd> clean = generate_synthetic_data(spec);
    out.data_seconds = seconds_since(t0);

    const Mesh mesh = inversion_mesh(spec);
    const AngularGrid angular = inversion_angular(spec);
    out.truth = inversion_truth(spec);

    t0 = std::chrono::steady_clock::now();
    const SystemFactorization system(spec.mode, mesh, angular, out.truth.field);
    const Digest fingerprint = system_fingerprint(mesh, angular, spec.mode, system.known());
    if (cache && cache->meta.hash == fingerprint && cache->phase_size() == system.phase_size()) {
        out.cache = *cache;
    } else {
        out.cache = compute_svd(system.A());
        out.cache.meta.hash = fingerprint;
    }
    out.svd_seconds = seconds_since(t0);
    spdlog::info("{}: data {:.1f}s, system + SVD {:.1f}s, rank {}", spec.name, out.data_seconds, out.svd_seconds,
                 out.cache.rank());

    for (double gamma : spec.noise_levels) {
        NoiseRun run;
        run.gamma_percent = gamma;
        t0 = std::chrono::steady_clock::now();
        run.result = reconstruct(system, out.cache, add_noise(clean, gamma, spec.seed), config);
        run.seconds = seconds_since(t0);
        run.relative_error = relative_l2_error(run.result.sigma, out.truth.unknown, mesh);
        run.result.error_vs_truth = run.relative_error;
        spdlog::info("{} noise {}%: error {:.4f}, {} iterations ({}), {:.1f}s", spec.name, gamma, run.relative_error,
                     run.result.iterations, to_string(run.result.status), run.seconds);
        out.runs.push_back(std::move(run));
    }
    return out;
}

}  // namespace rtsom
