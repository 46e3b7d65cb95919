#include "rtsom/bfgs.hpp"

#include "rtsom/errors.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <sstream>

namespace rtsom {

const char* to_string(BfgsStatus status)
{
    switch (status) {
    case BfgsStatus::converged: return "converged";
    case BfgsStatus::max_iterations: return "max_iterations";
    case BfgsStatus::stalled: return "stalled";
    case BfgsStatus::line_search_failed: return "line_search_failed";
    }
    return "unknown";
}

namespace {

[[noreturn]] void non_finite(const char* what, const Eigen::VectorXd& x)
{
    std::ostringstream msg;
    msg << "bfgs: non-finite " << what << " at iterate [";
    const Eigen::Index shown = std::min<Eigen::Index>(x.size(), 16);
    for (Eigen::Index i = 0; i < shown; ++i) msg << (i ? ", " : "") << x[i];
    if (shown < x.size()) msg << ", ... (" << x.size() << " entries)";
    msg << "]";
    throw NumericalError(msg.str());
}

double eval(const Objective& f, const Eigen::VectorXd& x, Eigen::VectorXd* g)
{
    const double v = f(x, g);
    if (!std::isfinite(v)) non_finite("objective", x);
    if (g && !g->allFinite()) non_finite("gradient", x);
    return v;
}

void clamp(Eigen::VectorXd& x, const BfgsOptions& o)
{
    if (!o.positivity_floor) return;
    for (Eigen::Index i = o.floor_begin; i < x.size(); ++i) x[i] = std::max(x[i], *o.positivity_floor);
}

}  // namespace

BfgsResult bfgs_minimize(const Objective& objective, const Eigen::VectorXd& x0, const BfgsOptions& options)
{
    if (options.max_iterations < 1) throw InvalidArgument("bfgs: max_iterations must be >= 1");
    if (!(options.gradient_tolerance > 0.0)) throw InvalidArgument("bfgs: gradient_tolerance must be positive");
    const auto& ls = options.line_search;
    if (!(ls.sufficient_decrease > 0.0 && ls.sufficient_decrease < 1.0) || !(ls.backtrack > 0.0 && ls.backtrack < 1.0))
        throw InvalidArgument("bfgs: line-search constants must lie in (0, 1)");

    const Eigen::Index n = x0.size();
    BfgsResult res;
    res.x = x0;
    clamp(res.x, options);
    Eigen::VectorXd g(n);
    res.value = eval(objective, res.x, &g);
    res.history.push_back(res.value);
    res.gradient_norm = g.norm();
    if (res.gradient_norm <= options.gradient_tolerance) {
        res.status = BfgsStatus::converged;
        return res;
    }

    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd x_new(n), g_new(n), d(n), s(n), y(n), hy(n);
    for (int k = 0; k < options.max_iterations; ++k) {
        d.noalias() = -h * g;
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            h.setIdentity();
            d = -g;
            slope = -g.squaredNorm();
        }

        double step = 1.0;
        double f_new = 0.0;
        bool accepted = false;
        for (int b = 0; b <= ls.max_backtracks; ++b, step *= ls.backtrack) {
            x_new = res.x + step * d;
            clamp(x_new, options);
            s = x_new - res.x;
            const double expected = options.positivity_floor ? g.dot(s) : step * slope;
            f_new = eval(objective, x_new, nullptr);
            if (f_new <= res.value + ls.sufficient_decrease * expected && expected < 0.0) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            spdlog::warn("bfgs: line search failed at iteration {}, returning best iterate (f = {:.6e})", k,
                         res.value);
            res.status = BfgsStatus::line_search_failed;
            return res;
        }

        f_new = eval(objective, x_new, &g_new);
        y = g_new - g;
        res.x.swap(x_new);
        g.swap(g_new);
        res.value = f_new;
        res.history.push_back(f_new);
        res.iterations = k + 1;
        res.gradient_norm = g.norm();

        const double sy = s.dot(y);
        if (sy > options.curvature_guard * s.norm() * y.norm()) {
            hy.noalias() = h * y;
            const double rho = 1.0 / sy;
            const double yhy = y.dot(hy);
            // H+ = (I - rho s y^t) H (I - rho y s^t) + rho s s^t, expanded.
            h.noalias() -= rho * (s * hy.transpose() + hy * s.transpose());
            h.noalias() += (rho * rho * yhy + rho) * (s * s.transpose());
        } else {
            ++res.skipped_updates;
        }

        if (res.gradient_norm <= options.gradient_tolerance) {
            res.status = BfgsStatus::converged;
            return res;
        }
        const int w = options.stall_window;
        if (w > 0 && static_cast<int>(res.history.size()) > w) {
            const double before = res.history[res.history.size() - 1 - static_cast<std::size_t>(w)];
            const double scale = std::abs(before);
            if (scale > 0.0 && (before - res.value) / scale < options.stall_tolerance) {
                res.status = BfgsStatus::stalled;
                return res;
            }
        }
    }
    res.status = BfgsStatus::max_iterations;
    return res;
}

double gradient_check(const Objective& objective, const Eigen::VectorXd& x, double eps)
{
    Eigen::VectorXd g(x.size());
    objective(x, &g);
    double worst = 0.0;
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double hstep = eps * std::max(1.0, std::abs(x[i]));
        xp[i] = x[i] + hstep;
        const double fp = objective(xp, nullptr);
        xp[i] = x[i] - hstep;
        const double fm = objective(xp, nullptr);
        xp[i] = x[i];
        const double fd = (fp - fm) / (2.0 * hstep);
        const double denom = std::max({std::abs(g[i]), std::abs(fd), 1e-300});
        worst = std::max(worst, std::abs(g[i] - fd) / denom);
    }
    return worst;
}

}  // namespace rtsom
