#include "rtsom/transport.hpp"

#include "rtsom/errors.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <string>

namespace rtsom {

StreamingOperator::StreamingOperator(const Mesh& mesh, const AngularGrid& angular, Eigen::VectorXd attenuation)
    : nx_(mesh.nx),
      ny_(mesh.ny),
      hx_(mesh.hx),
      hy_(mesh.hy),
      directions_(angular.directions),
      faces_(mesh.boundary_faces),
      volumes_(mesh.cell_volumes),
      attenuation_(std::move(attenuation))
{
    if (attenuation_.size() != static_cast<Eigen::Index>(mesh.num_cells()))
        throw InvalidArgument("StreamingOperator: attenuation size does not match mesh");
    if (!(attenuation_.array() >= 0.0).all())
        throw InvalidArgument("StreamingOperator: attenuation must be nonnegative");
}

StreamingOperator StreamingOperator::free_streaming(const Mesh& mesh, const AngularGrid& angular)
{
    return {mesh, angular, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_cells()))};
}

void StreamingOperator::solve_direction(std::size_t l, const double* rhs, double* out) const
{
    const Point2 v = directions_[l];
    const double ax = std::abs(v.x) / hx_;
    const double ay = std::abs(v.y) / hy_;
    const bool xpos = v.x >= 0.0;
    const bool ypos = v.y >= 0.0;
    const double* sig = attenuation_.data();

    for (std::size_t jj = 0; jj < ny_; ++jj) {
        const std::size_t j = ypos ? jj : ny_ - 1 - jj;
        const bool has_up_y = ypos ? j > 0 : j + 1 < ny_;
        const std::size_t up_row = ypos ? j - 1 : j + 1;
        for (std::size_t ii = 0; ii < nx_; ++ii) {
            const std::size_t i = xpos ? ii : nx_ - 1 - ii;
            const std::size_t m = j * nx_ + i;
            double acc = rhs[m];
            if (xpos ? i > 0 : i + 1 < nx_) acc += ax * out[j * nx_ + (xpos ? i - 1 : i + 1)];
            if (has_up_y) acc += ay * out[up_row * nx_ + i];
            out[m] = acc / (ax + ay + sig[m]);
        }
    }
}

void StreamingOperator::solve_adjoint_direction(std::size_t l, const double* rhs, double* out) const
{
    const Point2 v = directions_[l];
    const double ax = std::abs(v.x) / hx_;
    const double ay = std::abs(v.y) / hy_;
    const bool xpos = v.x >= 0.0;
    const bool ypos = v.y >= 0.0;
    const double* sig = attenuation_.data();

    // Reverse of the forward order; couples each cell to its downwind neighbours.
    for (std::size_t jj = 0; jj < ny_; ++jj) {
        const std::size_t j = ypos ? ny_ - 1 - jj : jj;
        const bool has_down_y = ypos ? j + 1 < ny_ : j > 0;
        const std::size_t down_row = ypos ? j + 1 : j - 1;
        for (std::size_t ii = 0; ii < nx_; ++ii) {
            const std::size_t i = xpos ? nx_ - 1 - ii : ii;
            const std::size_t m = j * nx_ + i;
            double acc = rhs[m];
            if (xpos ? i + 1 < nx_ : i > 0) acc += ax * out[j * nx_ + (xpos ? i + 1 : i - 1)];
            if (has_down_y) acc += ay * out[down_row * nx_ + i];
            out[m] = acc / (ax + ay + sig[m]);
        }
    }
}

PhaseVector StreamingOperator::solve(const PhaseVector& rhs) const
{
    if (rhs.size() != static_cast<Eigen::Index>(size()))
        throw InvalidArgument("StreamingOperator::solve: size mismatch");
    PhaseVector out(rhs.size());
    const std::size_t n = num_cells();
    const auto ns = static_cast<long>(num_directions());
#pragma omp parallel for schedule(static)
    for (long l = 0; l < ns; ++l)
        solve_direction(static_cast<std::size_t>(l), rhs.data() + l * n, out.data() + l * n);
    return out;
}

PhaseVector StreamingOperator::solve_adjoint(const PhaseVector& rhs) const
{
    if (rhs.size() != static_cast<Eigen::Index>(size()))
        throw InvalidArgument("StreamingOperator::solve_adjoint: size mismatch");
    PhaseVector out(rhs.size());
    const std::size_t n = num_cells();
    const auto ns = static_cast<long>(num_directions());
#pragma omp parallel for schedule(static)
    for (long l = 0; l < ns; ++l)
        solve_adjoint_direction(static_cast<std::size_t>(l), rhs.data() + l * n, out.data() + l * n);
    return out;
}

PhaseVector StreamingOperator::apply(const PhaseVector& u) const
{
    if (u.size() != static_cast<Eigen::Index>(size()))
        throw InvalidArgument("StreamingOperator::apply: size mismatch");
    PhaseVector out(u.size());
    const std::size_t n = num_cells();
    for (std::size_t l = 0; l < num_directions(); ++l) {
        const Point2 v = directions_[l];
        const double ax = std::abs(v.x) / hx_;
        const double ay = std::abs(v.y) / hy_;
        const double* ul = u.data() + l * n;
        double* ol = out.data() + l * n;
        for (std::size_t j = 0; j < ny_; ++j) {
            for (std::size_t i = 0; i < nx_; ++i) {
                const std::size_t m = j * nx_ + i;
                double acc = (ax + ay + attenuation_[static_cast<Eigen::Index>(m)]) * ul[m];
                if (v.x >= 0.0 ? i > 0 : i + 1 < nx_) acc -= ax * ul[j * nx_ + (v.x >= 0.0 ? i - 1 : i + 1)];
                if (v.y >= 0.0 ? j > 0 : j + 1 < ny_) acc -= ay * ul[(v.y >= 0.0 ? j - 1 : j + 1) * nx_ + i];
                ol[m] = acc;
            }
        }
    }
    return out;
}

PhaseVector StreamingOperator::inflow_source(std::span<const double> inflow) const
{
    if (inflow.size() != faces_.size())
        throw InvalidArgument("inflow_source: expected one value per boundary face");
    const std::size_t n = num_cells();
    PhaseVector b = PhaseVector::Zero(static_cast<Eigen::Index>(size()));
    for (std::size_t l = 0; l < num_directions(); ++l) {
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            const BoundaryFace& face = faces_[f];
            const double vn = dot(directions_[l], face.normal);
            if (vn < 0.0 && inflow[f] != 0.0)
                b[static_cast<Eigen::Index>(l * n + face.cell)] +=
                    -vn * face.length / volumes_[face.cell] * inflow[f];
        }
    }
    return b;
}

Eigen::MatrixXd StreamingOperator::dense() const
{
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::MatrixXd t(n, n);
    PhaseVector e = PhaseVector::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        e[k] = 1.0;
        t.col(k) = apply(e);
        e[k] = 0.0;
    }
    return t;
}

PhaseVector apply_kernel(const AngularGrid& angular, const PhaseVector& u, std::size_t cells, bool transpose)
{
    const auto n = static_cast<Eigen::Index>(cells);
    const auto ns = static_cast<Eigen::Index>(angular.ns);
    if (u.size() != n * ns) throw InvalidArgument("apply_kernel: size mismatch");
    PhaseVector out(u.size());
    Eigen::Map<const Eigen::MatrixXd> in_mat(u.data(), n, ns);
    Eigen::Map<Eigen::MatrixXd> out_mat(out.data(), n, ns);
    // Column l of in_mat is direction block l.
    if (transpose)
        out_mat.noalias() = in_mat * angular.scatter;
    else
        out_mat.noalias() = in_mat * angular.scatter.transpose();
    return out;
}

PhaseVector scale_cells(const Eigen::VectorXd& c, const PhaseVector& u)
{
    const Eigen::Index n = c.size();
    if (n == 0 || u.size() % n != 0) throw InvalidArgument("scale_cells: size mismatch");
    PhaseVector out(u.size());
    Eigen::Map<const Eigen::MatrixXd> in_mat(u.data(), n, u.size() / n);
    Eigen::Map<Eigen::MatrixXd> out_mat(out.data(), n, u.size() / n);
    out_mat = in_mat.array().colwise() * c.array();
    return out;
}

ForwardSolution solve_forward(const OpticalField& field, const AngularGrid& angular, const Mesh& mesh,
                              std::span<const double> inflow, const ForwardOptions& options)
{
    field.validate(mesh.num_cells());
    const StreamingOperator transport(mesh, angular, field.total());
    const PhaseVector boundary = transport.inflow_source(inflow);

    ForwardSolution sol;
    sol.u = PhaseVector::Zero(boundary.size());
    if (boundary.squaredNorm() == 0.0) return sol;

    for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
        PhaseVector rhs = scale_cells(field.sigma_s, apply_kernel(angular, sol.u, mesh.num_cells()));
        rhs += boundary;
        PhaseVector next = transport.solve(rhs);
        const double norm = next.norm();
        sol.last_update = norm > 0.0 ? (next - sol.u).norm() / norm : 0.0;
        sol.u = std::move(next);
        sol.sweeps = sweep;
        if (!std::isfinite(sol.last_update)) throw NumericalError("solve_forward: non-finite iterate");
        if (sol.last_update < options.tolerance) {
            spdlog::debug("source iteration converged in {} sweeps", sweep);
            return sol;
        }
    }
    throw IterationLimitError("solve_forward: no convergence after " + std::to_string(options.max_sweeps) +
                                  " sweeps (last relative update " + std::to_string(sol.last_update) + ")",
                              options.max_sweeps, sol.last_update);
}

ForwardSolution solve_forward(const OpticalField& field, const AngularGrid& angular, const Mesh& mesh,
                              std::size_t source_index, const ForwardOptions& options)
{
    if (source_index >= mesh.num_sources()) throw InvalidArgument("solve_forward: source index out of range");
    return solve_forward(field, angular, mesh, mesh.source_intensity[source_index], options);
}

PhaseVector measurement_row(std::size_t detector, const Mesh& mesh, const AngularGrid& angular)
{
    const std::size_t n = mesh.num_cells();
    PhaseVector row = PhaseVector::Zero(static_cast<Eigen::Index>(n * angular.ns));
    const BoundaryFace& face = mesh.boundary_faces.at(mesh.detector_faces.at(detector));
    for (std::size_t l = 0; l < angular.ns; ++l) {
        const double vn = dot(angular.directions[l], face.normal);
        if (vn > 0.0) row[static_cast<Eigen::Index>(phase_index(l, face.cell, n))] = angular.weights[l] * vn;
    }
    return row;
}

Eigen::VectorXd measure_current(const PhaseVector& u, const Mesh& mesh, const AngularGrid& angular)
{
    const std::size_t n = mesh.num_cells();
    if (u.size() != static_cast<Eigen::Index>(n * angular.ns))
        throw InvalidArgument("measure_current: phase vector size mismatch");
    Eigen::VectorXd j(static_cast<Eigen::Index>(mesh.num_detectors()));
    for (std::size_t d = 0; d < mesh.num_detectors(); ++d) {
        const BoundaryFace& face = mesh.boundary_faces[mesh.detector_faces[d]];
        double acc = 0.0;
        for (std::size_t l = 0; l < angular.ns; ++l) {
            const double vn = dot(angular.directions[l], face.normal);
            if (vn > 0.0) acc += angular.weights[l] * vn * u[static_cast<Eigen::Index>(phase_index(l, face.cell, n))];
        }
        j[static_cast<Eigen::Index>(d)] = acc;
    }
    return j;
}

Eigen::VectorXd phase_weights(const Mesh& mesh, const AngularGrid& angular)
{
    const std::size_t n = mesh.num_cells();
    Eigen::VectorXd w(static_cast<Eigen::Index>(n * angular.ns));
    for (std::size_t l = 0; l < angular.ns; ++l)
        for (std::size_t m = 0; m < n; ++m)
            w[static_cast<Eigen::Index>(phase_index(l, m, n))] = angular.weights[l] * mesh.cell_volumes[m];
    return w;
}

namespace {

StreamingOperator make_streaming(GreenVariant variant, const OpticalField& field, const Mesh& mesh,
                                 const AngularGrid& angular)
{
    if (variant == GreenVariant::free) return StreamingOperator::free_streaming(mesh, angular);
    if (field.sigma_a.size() != static_cast<Eigen::Index>(mesh.num_cells()))
        throw InvalidArgument("attenuated Green function needs an absorption field on the mesh");
    return {mesh, angular, field.sigma_a};
}

// Rows of A = M T^{-1}; row d is T^{-t} M_d^t. Only outgoing directions at the
// detector face carry a nonzero right-hand side, the other blocks stay zero.
Eigen::MatrixXd assemble_rows(const StreamingOperator& op, const Mesh& mesh, const AngularGrid& angular)
{
    const std::size_t n = mesh.num_cells();
    const auto nd = static_cast<long>(mesh.num_detectors());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nd, static_cast<Eigen::Index>(op.size()));
#pragma omp parallel for schedule(dynamic)
    for (long d = 0; d < nd; ++d) {
        const PhaseVector rhs = measurement_row(static_cast<std::size_t>(d), mesh, angular);
        PhaseVector row = PhaseVector::Zero(rhs.size());
        for (std::size_t l = 0; l < angular.ns; ++l) {
            if (rhs.segment(static_cast<Eigen::Index>(l * n), static_cast<Eigen::Index>(n)).isZero(0.0)) continue;
            op.solve_adjoint_direction(l, rhs.data() + l * n, row.data() + l * n);
        }
        a.row(d) = row.transpose();
    }
    return a;
}

}  // namespace

Eigen::MatrixXd assemble_green_boundary(GreenVariant variant, const OpticalField& field, const Mesh& mesh,
                                        const AngularGrid& angular)
{
    const StreamingOperator op = make_streaming(variant, field, mesh, angular);
    Eigen::MatrixXd gb = assemble_rows(op, mesh, angular);
    const Eigen::VectorXd w = phase_weights(mesh, angular);
    gb.array().rowwise() /= w.transpose().array();
    return gb;
}

GreenSet assemble_green(GreenVariant variant, const OpticalField& field, const Mesh& mesh,
                        const AngularGrid& angular)
{
    GreenSet set{variant, make_streaming(variant, field, mesh, angular), {}, phase_weights(mesh, angular)};
    set.boundary = assemble_rows(set.streaming, mesh, angular);
    set.boundary.array().rowwise() /= set.weights.transpose().array();
    return set;
}

PhaseVector apply_green_volume(const GreenSet& green, const PhaseVector& w, bool transpose)
{
    if (transpose) return green.streaming.solve_adjoint(w).cwiseQuotient(green.weights);
    return green.streaming.solve(w.cwiseQuotient(green.weights));
}

PhaseVector apply_green_volume(GreenVariant variant, const OpticalField& field, const Mesh& mesh,
                               const AngularGrid& angular, const PhaseVector& w, bool transpose)
{
    const StreamingOperator op = make_streaming(variant, field, mesh, angular);
    const Eigen::VectorXd weights = phase_weights(mesh, angular);
    if (transpose) return op.solve_adjoint(w).cwiseQuotient(weights);
    return op.solve(w.cwiseQuotient(weights));
}

}  // namespace rtsom
