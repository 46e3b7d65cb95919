#include "rtsom/cli.hpp"

#include "rtsom/errors.hpp"
#include "rtsom/hash.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace rtsom::cli {

using nlohmann::json;

std::string noise_label(double gamma_percent)
{
    if (gamma_percent == std::floor(gamma_percent) && std::abs(gamma_percent) < 1e15)
        return std::to_string(static_cast<long long>(gamma_percent));
    std::ostringstream s;
    s << std::setprecision(12) << gamma_percent;
    return s.str();
}

fs::path data_file(const fs::path& out, std::size_t source, double gamma_percent)
{
    return out / "data" / ("J_q" + std::to_string(source) + "_noise" + noise_label(gamma_percent) + ".csv");
}

fs::path result_dir(const fs::path& out, const std::string& name, double gamma_percent)
{
    return out / "results" / (name + "_noise" + noise_label(gamma_percent));
}

fs::path cache_file(const RunConfig& cfg)
{
    const fs::path out(cfg.output_dir);
    if (cfg.cache_path.empty()) return out / "cache" / (cfg.experiment.name + ".trsc");
    const fs::path p(cfg.cache_path);
    return p.is_absolute() ? p : out / p;
}

namespace {

struct Manifest {
    std::string command;
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
};

void write_manifest(const RunConfig& cfg, const Manifest& m)
{
    const fs::path dir = fs::path(cfg.output_dir) / "manifests";
    fs::create_directories(dir);
    Sha256 h;
    h.update(std::string_view(cfg.source_text));
    json doc;
    doc["command"] = m.command;
    doc["config_sha256"] = to_hex(h.finish());
    doc["seed"] = cfg.experiment.seed;
    auto list = [](const std::vector<fs::path>& paths) {
        json arr = json::array();
        for (const auto& p : paths) arr.push_back({{"path", p.generic_string()}, {"sha256", to_hex(sha256_file(p.string()))}});
        return arr;
    };
    doc["inputs"] = list(m.inputs);
    doc["outputs"] = list(m.outputs);
    std::ofstream(dir / (m.command + ".json")) << doc.dump(2) << '\n';
}

void write_vector_csv(const fs::path& path, const Eigen::VectorXd& v)
{
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < v.size(); ++i) out << v[i] << '\n';
}

Eigen::VectorXd read_vector_csv(const fs::path& path, std::size_t expected)
{
    std::ifstream in(path);
    if (!in) throw InvalidArgument("missing input " + path.string() + " (run gen-data first)");
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(line, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0) throw InvalidArgument(path.string() + ":" + std::to_string(values.size() + 1) + ": not a number");
        values.push_back(v);
    }
    if (values.size() != expected)
        throw InvalidArgument(path.string() + " has " + std::to_string(values.size()) + " rows, expected " +
                              std::to_string(expected));
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

struct Problem {
    Mesh mesh;
    AngularGrid angular;
    InversionTruth truth;
};

Problem build_problem(const RunConfig& cfg)
{
    return {inversion_mesh(cfg.experiment), inversion_angular(cfg.experiment), inversion_truth(cfg.experiment)};
}

void write_singular_values(const fs::path& path, const SvdCache& cache)
{
    std::ofstream out(path);
    out << "index,mu,mu_over_mu1\n" << std::setprecision(17);
    const std::size_t r = cache.rank();
    for (std::size_t i = 0; i < r; ++i) {
        const double mu = cache.mu[static_cast<Eigen::Index>(i)];
        out << i + 1 << ',' << mu << ',' << mu / cache.mu[0] << '\n';
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<fs::path> gen_data(const RunConfig& cfg)
{
    const fs::path out(cfg.output_dir);
    fs::create_directories(out / "data");
    const auto clean = generate_synthetic_data(cfg.experiment);
    std::vector<fs::path> written;
    for (double gamma : cfg.experiment.noise_levels) {
        const auto noisy = add_noise(clean, gamma, cfg.experiment.seed);
        for (std::size_t q = 0; q < noisy.size(); ++q) {
            written.push_back(data_file(out, q, gamma));
            write_vector_csv(written.back(), noisy[q]);
        }
    }
    spdlog::info("gen-data: wrote {} data files under {}", written.size(), (out / "data").string());
    write_manifest(cfg, {"gen-data", {}, written});
    return written;
}

SvdOutcome precompute_svd(const RunConfig& cfg)
{
    const fs::path out(cfg.output_dir);
    const Problem p = build_problem(cfg);
    const Mode mode = cfg.experiment.mode;
    const Eigen::VectorXd known = mode == Mode::absorption ? p.truth.field.sigma_s : p.truth.field.sigma_a;
    const Digest fingerprint = system_fingerprint(p.mesh, p.angular, mode, known);

    SvdOutcome res;
    res.cache_path = cache_file(cfg);
    SvdCache cache;
    if (fs::exists(res.cache_path)) {
        try {
            cache = load_cache(res.cache_path.string(), fingerprint);
            res.cache_hit = true;
        } catch (const CacheError& e) {
            spdlog::info("precompute-svd: existing cache not reusable ({}), recomputing", e.what());
        }
    }
    if (!res.cache_hit) {
        const auto t0 = std::chrono::steady_clock::now();
        const SystemFactorization system(mode, p.mesh, p.angular, p.truth.field);
        cache = compute_svd(system.A());
        cache.meta.hash = fingerprint;
        fs::create_directories(res.cache_path.parent_path());
        save_cache(cache, res.cache_path.string());
        spdlog::info("precompute-svd: computed SVD of {}x{} A in {:.1f}s", system.A().rows(), system.A().cols(),
                     seconds_since(t0));
    } else {
        spdlog::info("precompute-svd: cache hit at {}", res.cache_path.string());
    }
    res.rank = cache.rank();
    fs::create_directories(out);
    write_singular_values(out / "singular_values.csv", cache);
    write_manifest(cfg, {"precompute-svd", {}, {res.cache_path, out / "singular_values.csv"}});
    return res;
}

std::vector<fs::path> reconstruct_all(const RunConfig& cfg)
{
    const fs::path out(cfg.output_dir);
    const ExperimentSpec& ex = cfg.experiment;
    const Problem p = build_problem(cfg);
    const auto t_setup = std::chrono::steady_clock::now();
    const SystemFactorization system(ex.mode, p.mesh, p.angular, p.truth.field);
    const Digest fingerprint = system_fingerprint(p.mesh, p.angular, ex.mode, system.known());
    const fs::path cache_path = cache_file(cfg);
    if (!fs::exists(cache_path))
        throw CacheError(CacheErrorKind::io, "no SVD cache at " + cache_path.string() + " (run precompute-svd first)");
    const SvdCache cache = load_cache(cache_path.string(), fingerprint);
    const double setup_seconds = seconds_since(t_setup);

    Manifest manifest{"reconstruct", {cache_path}, {}};
    std::vector<fs::path> dirs;
    for (double gamma : ex.noise_levels) {
        std::vector<Eigen::VectorXd> data;
        for (std::size_t q = 0; q < ex.sources; ++q) {
            const fs::path f = data_file(out, q, gamma);
            data.push_back(read_vector_csv(f, ex.detectors));
            manifest.inputs.push_back(f);
        }

        ReconConfig rc = cfg.recon;
        if (!cfg.init_from.empty()) {
            const fs::path prior = result_dir(out, cfg.init_from, gamma);
            rc.initial_sigma = read_grid_csv((prior / "sigma_est.csv").string(), p.mesh);
            std::ifstream sin(prior / "summary.json");
            if (!sin) throw InvalidArgument("init_from: no summary.json in " + prior.string());
            const json prev = json::parse(sin);
            if (prev.contains("gamma") && !prev["gamma"].empty()) {
                const auto g = prev["gamma"].get<std::vector<double>>();
                rc.initial_gamma = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
            }
            manifest.inputs.push_back(prior / "sigma_est.csv");
            manifest.inputs.push_back(prior / "summary.json");
        }

        const auto t0 = std::chrono::steady_clock::now();
        ReconResult res = reconstruct(system, cache, data, rc);
        const double seconds = seconds_since(t0);
        res.error_vs_truth = relative_l2_error(res.sigma, p.truth.unknown, p.mesh);

        const fs::path dir = result_dir(out, ex.name, gamma);
        fs::create_directories(dir);
        write_grid_csv((dir / "sigma_est.csv").string(), res.sigma, p.mesh);
        write_grid_csv((dir / "truth.csv").string(), p.truth.unknown, p.mesh);
        write_pgm((dir / "sigma_est.pgm").string(), res.sigma, p.mesh);
        write_pgm((dir / "truth.pgm").string(), p.truth.unknown, p.mesh);
        write_singular_values(dir / "singular_values.csv", cache);
        {
            std::ofstream h(dir / "objective_history.csv");
            h << "iteration,objective\n" << std::setprecision(17);
            for (std::size_t k = 0; k < res.objective_history.size(); ++k)
                h << k << ',' << res.objective_history[k] << '\n';
        }
        json s;
        s["name"] = ex.name;
        s["mode"] = to_string(ex.mode);
        s["algorithm"] = to_string(res.algorithm);
        s["noise_percent"] = gamma;
        s["L"] = res.truncation;
        s["relative_l2_error"] = *res.error_vs_truth;
        s["objective"] = res.objective;
        s["initial_objective"] = res.objective_history.empty() ? res.objective : res.objective_history.front();
        if (res.joint_objective) s["joint_objective"] = *res.joint_objective;
        s["iterations"] = res.iterations;
        s["status"] = to_string(res.status);
        s["gamma"] = std::vector<double>(res.gamma.data(), res.gamma.data() + res.gamma.size());
        s["timings"] = {{"setup_seconds", setup_seconds}, {"reconstruction_seconds", seconds}};
        s["mesh"] = {{"nx", ex.nx}, {"ny", ex.ny}, {"ns", ex.ns}};
        s["init_from"] = cfg.init_from;
        std::ofstream(dir / "summary.json") << s.dump(2) << '\n';

        spdlog::info("reconstruct {} noise {}%: relative L2 error {:.4f} ({} iterations, {})", ex.name, gamma,
                     *res.error_vs_truth, res.iterations, to_string(res.status));
        for (const char* f : {"sigma_est.csv", "truth.csv", "sigma_est.pgm", "truth.pgm", "singular_values.csv",
                              "objective_history.csv", "summary.json"})
            manifest.outputs.push_back(dir / f);
        dirs.push_back(dir);
    }
    write_manifest(cfg, manifest);
    return dirs;
}

fs::path report(const fs::path& out)
{
    const fs::path results = out / "results";
    std::vector<fs::path> summaries;
    if (fs::exists(results))
        for (const auto& entry : fs::directory_iterator(results))
            if (fs::exists(entry.path() / "summary.json")) summaries.push_back(entry.path() / "summary.json");
    std::sort(summaries.begin(), summaries.end());

    const fs::path path = out / "report.csv";
    std::ofstream csv(path);
    csv << "run,mode,algorithm,noise_percent,L,relative_l2_error,objective,iterations,status,reconstruction_seconds\n";
    csv << std::setprecision(10);
    for (const auto& f : summaries) {
        std::ifstream in(f);
        const json s = json::parse(in);
        csv << f.parent_path().filename().string() << ',' << s.value("mode", "") << ',' << s.value("algorithm", "")
            << ',' << s.value("noise_percent", 0.0) << ',' << s.value("L", 0) << ','
            << s.value("relative_l2_error", 0.0) << ',' << s.value("objective", 0.0) << ','
            << s.value("iterations", 0) << ',' << s.value("status", "") << ','
            << s["timings"].value("reconstruction_seconds", 0.0) << '\n';
    }
    spdlog::info("report: {} runs -> {}", summaries.size(), path.string());
    return path;
}

int run(int argc, char** argv)
{
    CLI::App app{"Subspace-minimization reconstruction of transport coefficients"};
    app.require_subcommand(1);
    std::string config_path, output;
    int threads = 0;
    std::uint64_t seed = 0;
    bool verbose = false;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config_path, "JSON run configuration");
        if (needs_config) c->required()->check(CLI::ExistingFile);
        sub->add_option("--output", output, "output directory (overrides output.directory)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "noise seed (overrides noise.seed)");
        sub->add_flag("-v,--verbose", verbose, "debug logging");
    };
    auto* gen = app.add_subcommand("gen-data", "forward-simulate detector data for every source and noise level");
    auto* svd = app.add_subcommand("precompute-svd", "assemble A and cache its SVD");
    auto* rec = app.add_subcommand("reconstruct", "run the configured reconstruction for every noise level");
    auto* rep = app.add_subcommand("report", "tabulate result summaries into report.csv");
    for (auto* s : {gen, svd, rec}) add_common(s, true);
    add_common(rep, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ExitCode::ok : ExitCode::config_error;
    }
    if (verbose) spdlog::set_level(spdlog::level::debug);
    if (threads > 0) omp_set_num_threads(threads);

    try {
        if (rep->parsed()) {
            fs::path out = output;
            if (out.empty()) out = config_path.empty() ? fs::path("output") : fs::path(load_config(config_path).output_dir);
            report(out);
            return ExitCode::ok;
        }
        RunConfig cfg = load_config(config_path);
        if (!output.empty()) cfg.output_dir = output;
        if (app.get_subcommands().front()->get_option("--seed")->count()) cfg.experiment.seed = seed;

        if (gen->parsed()) gen_data(cfg);
        else if (svd->parsed()) precompute_svd(cfg);
        else if (rec->parsed()) reconstruct_all(cfg);
        return ExitCode::ok;
    } catch (const ConfigError& e) {
        spdlog::error("config error: {}", e.what());
        return ExitCode::config_error;
    } catch (const CacheError& e) {
        spdlog::error("cache mismatch: {}", e.what());
        return ExitCode::cache_mismatch;
    } catch (const InvalidArgument& e) {
        spdlog::error("invalid input: {}", e.what());
        return ExitCode::config_error;
    } catch (const NumericalError& e) {
        spdlog::error("numerical failure: {}", e.what());
        return ExitCode::numerical_failure;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return ExitCode::failure;
    }
}

}  // namespace rtsom::cli
