#include "rtsom/recon.hpp"

#include "rtsom/errors.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <mutex>

namespace rtsom {

const char* to_string(Algorithm algorithm)
{
    switch (algorithm) {
    case Algorithm::two_step: return "two_step";
    case Algorithm::modified_two_step: return "modified_two_step";
    case Algorithm::one_step: return "one_step";
    }
    return "unknown";
}

Algorithm parse_algorithm(const std::string& name)
{
    if (name == "two_step") return Algorithm::two_step;
    if (name == "modified_two_step") return Algorithm::modified_two_step;
    if (name == "one_step") return Algorithm::one_step;
    throw InvalidArgument("unknown algorithm '" + name + "' (expected two_step, modified_two_step or one_step)");
}

void ReconConfig::validate() const
{
    if (bfgs.max_iterations < 1) throw InvalidArgument("recon: max_iterations must be >= 1");
    if (!(bfgs.gradient_tolerance > 0.0)) throw InvalidArgument("recon: gradient_tolerance must be positive");
    if (bfgs.stall_window < 0 || bfgs.stall_tolerance < 0.0) throw InvalidArgument("recon: invalid stall window");
    if (bfgs.positivity_floor && !(*bfgs.positivity_floor > 0.0))
        throw InvalidArgument("recon: positivity floor must be positive");
    if (truncation.kind == LPolicy::Kind::fixed && truncation.fixed_value < 1)
        throw InvalidArgument("recon: truncation level must be >= 1");
}

namespace {

void check_truncation(const SvdCache& cache, std::size_t truncation)
{
    const std::size_t r = cache.rank();
    if (truncation < 1 || truncation > r)
        throw TruncationError("truncation level L = " + std::to_string(truncation) +
                              " exceeds the numerical rank " + std::to_string(r) + " of A; choose L <= " +
                              std::to_string(r));
}

void check_data(const Eigen::VectorXd& data, const SvdCache& cache)
{
    if (static_cast<std::size_t>(data.size()) != cache.num_detectors())
        throw InvalidArgument("data vector has " + std::to_string(data.size()) + " entries, cache expects " +
                              std::to_string(cache.num_detectors()));
}

Eigen::Map<const Eigen::MatrixXd> blocks(const PhaseVector& v, std::size_t cells)
{
    return {v.data(), static_cast<Eigen::Index>(cells), v.size() / static_cast<Eigen::Index>(cells)};
}

// Per cell: sum over directions of a .* b.
Eigen::VectorXd fiber_dot(const PhaseVector& a, const PhaseVector& b, std::size_t cells)
{
    return blocks(a, cells).cwiseProduct(blocks(b, cells)).rowwise().sum();
}

}  // namespace

SignalPart step1_signal(const Eigen::VectorXd& data, const SvdCache& cache, std::size_t truncation)
{
    check_truncation(cache, truncation);
    check_data(data, cache);
    const auto l = static_cast<Eigen::Index>(truncation);
    SignalPart out;
    out.beta = (cache.psi.leftCols(l).transpose() * data).cwiseQuotient(cache.mu.head(l));
    out.u = cache.phi.leftCols(l) * out.beta;
    return out;
}

Eigen::VectorXd residual_data(const Eigen::VectorXd& data, const SvdCache& cache, std::size_t truncation)
{
    check_data(data, cache);
    const auto l = static_cast<Eigen::Index>(truncation);
    const auto& psi_l = cache.psi.leftCols(l);
    return data - psi_l * (psi_l.transpose() * data);
}

Eigen::VectorXd step1_noise(const std::vector<Eigen::VectorXd>& data, const std::vector<SignalPart>& signal,
                            const SvdCache& cache, std::size_t truncation)
{
    check_truncation(cache, truncation);
    if (data.empty() || data.size() != signal.size())
        throw InvalidArgument("step1_noise: need one signal part per data vector");
    const std::size_t r = cache.rank();
    const auto n = static_cast<Eigen::Index>(r - truncation);
    if (n == 0) return {};

    const auto l = static_cast<Eigen::Index>(truncation);
    Eigen::VectorXd num = Eigen::VectorXd::Zero(n);
    double inv_norm_sum = 0.0;
    for (std::size_t q = 0; q < data.size(); ++q) {
        check_data(data[q], cache);
        const double jj = data[q].squaredNorm();
        if (!(jj > 0.0)) throw InvalidArgument("step1_noise: data vector " + std::to_string(q) + " is zero");
        // J - A U^s_q = J - sum_i beta_i mu_i psi_i
        const Eigen::VectorXd jres =
            data[q] - cache.psi.leftCols(l) * cache.mu.head(l).cwiseProduct(signal[q].beta);
        num += cache.psi.middleCols(l, n).transpose() * jres / jj;
        inv_norm_sum += 1.0 / jj;
    }
    const Eigen::VectorXd mu_n = cache.mu.segment(l, n);
    Eigen::VectorXd gamma = num.cwiseQuotient(mu_n) / inv_norm_sum;

    static std::once_flag logged;
    const Eigen::VectorXd unnormalized = num.cwiseQuotient(mu_n);
    if ((unnormalized - gamma).norm() > 1e-12 * gamma.norm()) {
        std::call_once(logged, [&] {
            spdlog::info("step1_noise: stationary average uses normalizer 1/sum_q |J_q|^-2 = {:.6e}; the "
                         "unnormalized average differs by relative {:.3e}",
                         1.0 / inv_norm_sum, (unnormalized - gamma).norm() / std::max(gamma.norm(), 1e-300));
        });
    }
    return gamma;
}

double noise_data_objective(const std::vector<Eigen::VectorXd>& data, const SvdCache& cache,
                            std::size_t truncation, const Eigen::VectorXd& gamma, Eigen::VectorXd* grad)
{
    const auto l = static_cast<Eigen::Index>(truncation);
    const auto n = gamma.size();
    if (static_cast<std::size_t>(l + n) > cache.num_detectors())
        throw InvalidArgument("noise_data_objective: too many noise coefficients");
    const auto psi_n = cache.psi.middleCols(l, n);
    const Eigen::VectorXd mu_n = cache.mu.segment(l, n);
    const Eigen::VectorXd a_gamma = psi_n * mu_n.cwiseProduct(gamma);
    double f = 0.0;
    if (grad) grad->setZero(n);
    for (const auto& j : data) {
        const double jj = j.squaredNorm();
        if (!(jj > 0.0)) throw InvalidArgument("noise_data_objective: zero data vector");
        const Eigen::VectorXd res = a_gamma - residual_data(j, cache, truncation);
        f += res.squaredNorm() / jj;
        if (grad) *grad += 2.0 / jj * mu_n.cwiseProduct(psi_n.transpose() * res);
    }
    return f;
}

PhaseVector noise_field(const SvdCache& cache, std::size_t truncation, const Eigen::VectorXd& gamma)
{
    if (gamma.size() == 0) return PhaseVector::Zero(cache.phi.rows());
    return cache.phi.middleCols(static_cast<Eigen::Index>(truncation), gamma.size()) * gamma;
}

// ---------------------------------------------------------------------------

CoefficientObjective::CoefficientObjective(const SystemFactorization& system, const std::vector<PhaseVector>& fields)
    : cells_(system.num_cells()),
      directions_(system.angular().ns),
      offset_(fields.size()),
      slope_(fields.size()),
      weights_(fields.size())
{
    if (fields.size() != system.num_sources())
        throw InvalidArgument("coefficient objective: need one field per source");
    for (std::size_t q = 0; q < fields.size(); ++q) {
        if (static_cast<std::size_t>(fields[q].size()) != system.phase_size())
            throw InvalidArgument("coefficient objective: field size does not match the phase space");
        weights_[q] = fields[q].squaredNorm();
        if (!(weights_[q] > 0.0))
            throw InvalidArgument("coefficient objective: intermediate field " + std::to_string(q) +
                                  " is zero, its weight vanishes");
    }
    const auto nq = static_cast<long>(fields.size());
#pragma omp parallel for schedule(static)
    for (long q = 0; q < nq; ++q) {
        const auto k = static_cast<std::size_t>(q);
        AffineImage img = system.affine_image(fields[k]);
        offset_[k] = img.base - fields[k] - system.F(k);
        slope_[k] = std::move(img.slope);
    }
}

double CoefficientObjective::operator()(const Eigen::VectorXd& sigma, Eigen::VectorXd* grad) const
{
    if (static_cast<std::size_t>(sigma.size()) != cells_)
        throw InvalidArgument("coefficient objective: sigma has wrong length");
    double f = 0.0;
    if (grad) grad->setZero(sigma.size());
    for (std::size_t q = 0; q < offset_.size(); ++q) {
        const auto s = blocks(slope_[q], cells_);
        const Eigen::MatrixXd r = blocks(offset_[q], cells_) + sigma.asDiagonal() * s;
        f += r.squaredNorm() / weights_[q];
        if (grad) *grad += (2.0 / weights_[q]) * r.cwiseProduct(s).rowwise().sum();
    }
    return f;
}

Objective CoefficientObjective::as_objective() const
{
    return [this](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return (*this)(x, g); };
}

Eigen::VectorXd CoefficientObjective::solve_direct() const
{
    if (cells_ > 256) throw InvalidArgument("solve_direct: limited to at most 256 cells");
    const auto n = static_cast<Eigen::Index>(cells_);
    const Eigen::Index per = static_cast<Eigen::Index>(cells_ * directions_);
    const Eigen::Index rows = per * static_cast<Eigen::Index>(offset_.size());

    // Residual is r(sigma) = r0 + Jac sigma; assemble Jac column by column.
    auto residual = [&](const Eigen::VectorXd& sigma) {
        Eigen::VectorXd r(rows);
        for (std::size_t q = 0; q < offset_.size(); ++q) {
            const double scale = 1.0 / std::sqrt(weights_[q]);
            Eigen::Map<Eigen::MatrixXd>(r.data() + static_cast<Eigen::Index>(q) * per, n,
                                        static_cast<Eigen::Index>(directions_)) =
                scale * (blocks(offset_[q], cells_) + sigma.asDiagonal() * blocks(slope_[q], cells_));
        }
        return r;
    };
    const Eigen::VectorXd r0 = residual(Eigen::VectorXd::Zero(n));
    Eigen::MatrixXd jac(rows, n);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    for (Eigen::Index m = 0; m < n; ++m) {
        e[m] = 1.0;
        jac.col(m) = residual(e) - r0;
        e[m] = 0.0;
    }
    const Eigen::MatrixXd normal = jac.transpose() * jac;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
        throw NumericalError("solve_direct: normal matrix is singular (Jacobian lacks full column rank)");
    return ldlt.solve(-jac.transpose() * r0);
}

Step2Result step2_coefficient(const SystemFactorization& system, const std::vector<PhaseVector>& fields,
                              const Eigen::VectorXd& initial_sigma, const BfgsOptions& options)
{
    const CoefficientObjective objective(system, fields);
    if (static_cast<std::size_t>(initial_sigma.size()) != system.num_cells())
        throw InvalidArgument("step2: initial sigma has wrong length");
    BfgsOptions opts = options;
    opts.floor_begin = 0;
    Step2Result out;
    out.bfgs = bfgs_minimize(objective.as_objective(), initial_sigma, opts);
    out.sigma = out.bfgs.x;
    return out;
}

// ---------------------------------------------------------------------------

JointObjective::JointObjective(const SystemFactorization& system, const SvdCache& cache, std::size_t truncation,
                               const std::vector<Eigen::VectorXd>& data, const std::vector<SignalPart>& signal)
    : system_(&system), cache_(&cache), truncation_(truncation), data_(data), signal_(signal)
{
    check_truncation(cache, truncation);
    if (data.size() != system.num_sources() || signal.size() != data.size())
        throw InvalidArgument("joint objective: need one data vector and signal part per source");
    if (cache.phase_size() != system.phase_size())
        throw InvalidArgument("joint objective: cache does not match the phase space");
    noise_ = cache.rank() - truncation;
    for (std::size_t q = 0; q < data.size(); ++q) {
        const double jj = data[q].squaredNorm();
        const double uu = signal[q].beta.squaredNorm();
        if (!(jj > 0.0) || !(uu > 0.0))
            throw InvalidArgument("joint objective: source " + std::to_string(q) + " has zero data or signal part");
        data_weights_.push_back(jj);
        state_weights_.push_back(uu);
        data_[q] = residual_data(data[q], cache, truncation);
    }
}

double JointObjective::operator()(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const
{
    const auto nn = static_cast<Eigen::Index>(noise_);
    const auto nc = static_cast<Eigen::Index>(num_cells());
    if (x.size() != nn + nc) throw InvalidArgument("joint objective: x has wrong length");
    const Eigen::VectorXd gamma = x.head(nn);
    const Eigen::VectorXd sigma = x.tail(nc);
    const auto l = static_cast<Eigen::Index>(truncation_);
    const auto psi_n = cache_->psi.middleCols(l, nn);
    const auto phi_n = cache_->phi.middleCols(l, nn);
    const Eigen::VectorXd mu_n = cache_->mu.segment(l, nn);

    const Eigen::VectorXd a_gamma = psi_n * mu_n.cwiseProduct(gamma);
    const PhaseVector noise = phi_n * gamma;

    const std::size_t nq = data_.size();
    std::vector<double> value(nq, 0.0);
    std::vector<Eigen::VectorXd> g_gamma(nq), g_sigma(nq);
#pragma omp parallel for schedule(static)
    for (long qi = 0; qi < static_cast<long>(nq); ++qi) {
        const auto q = static_cast<std::size_t>(qi);
        const Eigen::VectorXd data_res = a_gamma - data_[q];
        double f = data_res.squaredNorm() / data_weights_[q];

        const PhaseVector w = signal_[q].u + noise;
        const AffineImage img = system_->affine_image(w);
        const PhaseVector state_res = img.base + scale_cells(sigma, img.slope) - w - system_->F(q);
        const double sw = state_weight_ / state_weights_[q];
        f += sw * state_res.squaredNorm();
        value[q] = f;

        if (grad) {
            Eigen::VectorXd gg = (2.0 / data_weights_[q]) * mu_n.cwiseProduct(psi_n.transpose() * data_res);
            if (sw != 0.0) {
                // (B - I)^t applied to the state residual.
                const PhaseVector back = system_->apply_B_transpose(sigma, state_res) - state_res;
                gg += 2.0 * sw * (phi_n.transpose() * back);
                g_sigma[q] = 2.0 * sw * fiber_dot(state_res, img.slope, num_cells());
            } else {
                g_sigma[q] = Eigen::VectorXd::Zero(nc);
            }
            g_gamma[q] = std::move(gg);
        }
    }

    double f = 0.0;
    for (std::size_t q = 0; q < nq; ++q) f += value[q];
    if (grad) {
        grad->setZero(nn + nc);
        for (std::size_t q = 0; q < nq; ++q) {
            grad->head(nn) += g_gamma[q];
            grad->tail(nc) += g_sigma[q];
        }
    }
    return f;
}

Objective JointObjective::as_objective() const
{
    return [this](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return (*this)(x, g); };
}

// ---------------------------------------------------------------------------

ReconResult reconstruct(const SystemFactorization& system, const SvdCache& cache,
                        const std::vector<Eigen::VectorXd>& data, const ReconConfig& config)
{
    config.validate();
    if (data.size() != system.num_sources())
        throw InvalidArgument("reconstruct: got " + std::to_string(data.size()) + " data vectors for " +
                              std::to_string(system.num_sources()) + " sources");
    if (cache.phase_size() != system.phase_size())
        throw InvalidArgument("reconstruct: cache phase size does not match the system");

    ReconResult res;
    res.algorithm = config.algorithm;
    res.mode = system.mode();
    res.truncation = select_L(cache, data, config.truncation);
    check_truncation(cache, res.truncation);
    const std::size_t l = res.truncation;

    std::vector<SignalPart> signal;
    for (const auto& j : data) signal.push_back(step1_signal(j, cache, l));
    for (const auto& s : signal) res.beta.push_back(s.beta);

    const auto cells = static_cast<Eigen::Index>(system.num_cells());
    Eigen::VectorXd sigma0 = config.initial_sigma ? *config.initial_sigma
                                                  : Eigen::VectorXd::Constant(cells, config.initial_value);
    if (sigma0.size() != cells) throw InvalidArgument("reconstruct: initial sigma has wrong length");

    auto run_step2 = [&](const PhaseVector& noise) {
        std::vector<PhaseVector> fields;
        for (const auto& s : signal) fields.push_back(s.u + noise);
        return step2_coefficient(system, fields, sigma0, config.bfgs);
    };
    auto joint_value = [&](const Eigen::VectorXd& gamma, const Eigen::VectorXd& sigma) {
        const JointObjective joint(system, cache, l, data, signal);
        Eigen::VectorXd x(gamma.size() + sigma.size());
        x << gamma, sigma;
        return joint(x, nullptr);
    };

    if (config.algorithm == Algorithm::two_step) {
        const Step2Result s2 = run_step2(PhaseVector::Zero(static_cast<Eigen::Index>(system.phase_size())));
        res.sigma = s2.sigma;
        res.objective_history = s2.bfgs.history;
        res.objective = s2.bfgs.value;
        res.status = s2.bfgs.status;
        res.iterations = s2.bfgs.iterations;
        return res;
    }

    Eigen::VectorXd gamma;
    if (config.algorithm == Algorithm::modified_two_step || !config.initial_gamma) {
        gamma = step1_noise(data, signal, cache, l);
        const Step2Result s2 = run_step2(noise_field(cache, l, gamma));
        if (config.algorithm == Algorithm::modified_two_step) {
            res.sigma = s2.sigma;
            res.gamma = gamma;
            res.objective_history = s2.bfgs.history;
            res.objective = s2.bfgs.value;
            res.status = s2.bfgs.status;
            res.iterations = s2.bfgs.iterations;
            res.joint_objective = joint_value(gamma, s2.sigma);
            return res;
        }
        sigma0 = s2.sigma;
    } else {
        gamma = *config.initial_gamma;
        if (static_cast<std::size_t>(gamma.size()) != cache.rank() - l)
            throw InvalidArgument("reconstruct: initial gamma has " + std::to_string(gamma.size()) +
                                  " entries, expected " + std::to_string(cache.rank() - l));
    }

    const JointObjective joint(system, cache, l, data, signal);
    Eigen::VectorXd x0(gamma.size() + cells);
    x0 << gamma, sigma0;
    BfgsOptions opts = config.bfgs;
    opts.floor_begin = gamma.size();
    const BfgsResult br = bfgs_minimize(joint.as_objective(), x0, opts);
    res.gamma = br.x.head(gamma.size());
    res.sigma = br.x.tail(cells);
    res.objective_history = br.history;
    res.objective = br.value;
    res.status = br.status;
    res.iterations = br.iterations;
    res.joint_objective = br.value;
    return res;
}

}  // namespace rtsom
