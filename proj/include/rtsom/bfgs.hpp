#pragma once

// Dense BFGS with backtracking (Armijo) line search.

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rtsom {

/// Returns f(x); fills *grad when non-null.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct LineSearchOptions {
    double sufficient_decrease = 1e-4;
    double backtrack = 0.5;
    int max_backtracks = 60;
};

struct BfgsOptions {
    int max_iterations = 50;
    double gradient_tolerance = 1e-8;
    LineSearchOptions line_search;
    /// Early stop when (f_{k-w} - f_k) / |f_{k-w}| < stall_tolerance; 0 disables.
    int stall_window = 3;
    double stall_tolerance = 1e-4;
    /// Updates with s^t y <= guard * |s| |y| are skipped.
    double curvature_guard = 1e-12;
    /// Optional lower clamp applied to coordinates [floor_begin, n).
    std::optional<double> positivity_floor;
    Eigen::Index floor_begin = 0;
};

enum class BfgsStatus { converged, max_iterations, stalled, line_search_failed };

const char* to_string(BfgsStatus status);

struct BfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    int skipped_updates = 0;
    BfgsStatus status = BfgsStatus::max_iterations;
    std::vector<double> history;  // f(x0), then f after every accepted step
};

/// Throws NumericalError (with the offending iterate) on non-finite values or gradients.
BfgsResult bfgs_minimize(const Objective& objective, const Eigen::VectorXd& x0, const BfgsOptions& options = {});

/// Largest componentwise relative difference between the analytic gradient
/// and central differences with step eps * max(1, |x_i|).
double gradient_check(const Objective& objective, const Eigen::VectorXd& x, double eps = 1e-6);

}  // namespace rtsom
