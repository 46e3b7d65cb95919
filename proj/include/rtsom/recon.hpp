#pragma once

// Subspace-minimization reconstruction: two-step, modified two-step and
// one-step algorithms on top of the factorization J_q = A U_q, U_q = B U_q - F_q.

#include "rtsom/bfgs.hpp"
#include "rtsom/operators.hpp"
#include "rtsom/spectral.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace rtsom {

enum class Algorithm { two_step, modified_two_step, one_step };

const char* to_string(Algorithm algorithm);
/// Throws InvalidArgument for unknown names.
Algorithm parse_algorithm(const std::string& name);

struct ReconConfig {
    Algorithm algorithm = Algorithm::two_step;
    LPolicy truncation = LPolicy::fixed(50);
    BfgsOptions bfgs;
    /// Starting value of the unknown coefficient, constant over the mesh.
    double initial_value = 0.1;
    /// Overrides initial_value when set (one entry per cell).
    std::optional<Eigen::VectorXd> initial_sigma;
    /// Starting noise coefficients for one_step; defaults to the modified two-step output.
    std::optional<Eigen::VectorXd> initial_gamma;

    void validate() const;
};

struct SignalPart {
    Eigen::VectorXd beta;  // L coefficients
    PhaseVector u;         // Phi_L beta
};

struct ReconResult {
    Algorithm algorithm = Algorithm::two_step;
    Mode mode = Mode::absorption;
    std::size_t truncation = 0;
    Eigen::VectorXd sigma;  // reconstructed coefficient (sigma_a or sigma_s by mode)
    std::vector<Eigen::VectorXd> beta;
    Eigen::VectorXd gamma;  // empty for two_step
    std::vector<double> objective_history;
    double objective = 0.0;
    BfgsStatus status = BfgsStatus::converged;
    int iterations = 0;
    /// Value of the joint objective at the returned (gamma, sigma); filled for
    /// modified_two_step and one_step so a chained one_step can be checked.
    std::optional<double> joint_objective;
    std::optional<double> error_vs_truth;
};

/// beta_i = psi_i^t J / mu_i for i < L, and the phase field Phi_L beta.
SignalPart step1_signal(const Eigen::VectorXd& data, const SvdCache& cache, std::size_t truncation);

/// Data left after removing the first L left modes: J - Psi_L Psi_L^t J.
Eigen::VectorXd residual_data(const Eigen::VectorXd& data, const SvdCache& cache, std::size_t truncation);

/// Source-averaged noise coefficients over modes L..rank-1; the exact
/// minimizer of sum_q |A Phi_n gamma - Jres_q|^2 / |J_q|^2.
Eigen::VectorXd step1_noise(const std::vector<Eigen::VectorXd>& data, const std::vector<SignalPart>& signal,
                            const SvdCache& cache, std::size_t truncation);

/// sum_q |A Phi_n gamma - Jres_q|^2 / |J_q|^2 with its gradient.
double noise_data_objective(const std::vector<Eigen::VectorXd>& data, const SvdCache& cache,
                            std::size_t truncation, const Eigen::VectorXd& gamma, Eigen::VectorXd* grad = nullptr);

/// Phi_n gamma, the shared noise-subspace correction.
PhaseVector noise_field(const SvdCache& cache, std::size_t truncation, const Eigen::VectorXd& gamma);

/// Quadratic in the unknown coefficient: sum_q |(B - I) U_q - F_q|^2 / |U_q|^2.
/// B is affine in the coefficient, so the residual is c_q + sigma * slope_q.
class CoefficientObjective {
public:
    CoefficientObjective(const SystemFactorization& system, const std::vector<PhaseVector>& fields);

    double operator()(const Eigen::VectorXd& sigma, Eigen::VectorXd* grad) const;
    Objective as_objective() const;

    std::size_t num_cells() const { return cells_; }
    const std::vector<double>& weights() const { return weights_; }

    /// Exact minimizer via normal equations on the dense Jacobian; NOmega <= 256.
    Eigen::VectorXd solve_direct() const;

private:
    std::size_t cells_;
    std::size_t directions_;
    std::vector<PhaseVector> offset_;
    std::vector<PhaseVector> slope_;
    std::vector<double> weights_;
};

struct Step2Result {
    Eigen::VectorXd sigma;
    BfgsResult bfgs;
};

Step2Result step2_coefficient(const SystemFactorization& system, const std::vector<PhaseVector>& fields,
                              const Eigen::VectorXd& initial_sigma, const BfgsOptions& options);

/// Joint objective over x = [gamma; sigma]:
///   sum_q |A Phi_n gamma - Jres_q|^2 / |J_q|^2
/// + sum_q |(B(sigma) - I)(U^s_q + Phi_n gamma) - F_q|^2 / |U^s_q|^2
class JointObjective {
public:
    JointObjective(const SystemFactorization& system, const SvdCache& cache, std::size_t truncation,
                   const std::vector<Eigen::VectorXd>& data, const std::vector<SignalPart>& signal);

    double operator()(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const;
    Objective as_objective() const;

    std::size_t noise_size() const { return noise_; }
    std::size_t num_cells() const { return system_->num_cells(); }
    /// Scales the state-equation term; 0 leaves only the data term.
    void set_state_weight(double w) { state_weight_ = w; }

private:
    const SystemFactorization* system_;
    const SvdCache* cache_;
    std::size_t truncation_;
    std::size_t noise_;
    std::vector<Eigen::VectorXd> data_;
    std::vector<SignalPart> signal_;
    std::vector<double> data_weights_;
    std::vector<double> state_weights_;
    double state_weight_ = 1.0;
};

/// Runs the configured algorithm end to end. `data` are the measured J_q,
/// one per source of `system`.
ReconResult reconstruct(const SystemFactorization& system, const SvdCache& cache,
                        const std::vector<Eigen::VectorXd>& data, const ReconConfig& config);

}  // namespace rtsom
