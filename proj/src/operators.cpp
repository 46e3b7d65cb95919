#include "rtsom/operators.hpp"

#include "rtsom/errors.hpp"

namespace rtsom {

const char* to_string(Mode mode) { return mode == Mode::absorption ? "absorption" : "scattering"; }

Eigen::MatrixXd assemble_A(const Eigen::MatrixXd& green_boundary, const std::vector<double>& eta,
                           const std::vector<double>& zeta)
{
    const std::size_t n = zeta.size();
    if (n == 0 || eta.empty() || static_cast<std::size_t>(green_boundary.cols()) != n * eta.size())
        throw InvalidArgument("assemble_A: Gb has " + std::to_string(green_boundary.cols()) +
                              " columns, expected N_S * N_cells");
    Eigen::MatrixXd a(green_boundary.rows(), green_boundary.cols());
    for (std::size_t l = 0; l < eta.size(); ++l)
        for (std::size_t m = 0; m < n; ++m) {
            const auto c = static_cast<Eigen::Index>(phase_index(l, m, n));
            a.col(c) = green_boundary.col(c) * (eta[l] * zeta[m]);
        }
    return a;
}

PhaseVector assemble_F(const Mesh& mesh, const AngularGrid& angular, std::size_t source_index)
{
    if (source_index >= mesh.num_sources()) throw InvalidArgument("assemble_F: source index out of range");
    const StreamingOperator free_op = StreamingOperator::free_streaming(mesh, angular);
    return -free_op.inflow_source(mesh.source_intensity[source_index]);
}

PhaseVector apply_B_absorption(const OpticalField& sigma, const StreamingOperator& transport,
                               const AngularGrid& angular, const PhaseVector& w)
{
    const std::size_t n = transport.num_cells();
    const PhaseVector v = transport.solve(w);
    return scale_cells(sigma.sigma_s, apply_kernel(angular, v, n)) - scale_cells(sigma.total(), v);
}

PhaseVector apply_B_scattering(const OpticalField& sigma, const StreamingOperator& transport,
                               const AngularGrid& angular, const PhaseVector& w)
{
    const std::size_t n = transport.num_cells();
    const PhaseVector v = transport.solve(w);
    return scale_cells(sigma.sigma_s, apply_kernel(angular, v, n) - v);
}

PhaseVector apply_dB_dSigma(Mode mode, const StreamingOperator& transport, const AngularGrid& angular,
                            std::size_t cell, const PhaseVector& w)
{
    const std::size_t n = transport.num_cells();
    if (cell >= n) throw InvalidArgument("apply_dB_dSigma: cell index out of range");
    const PhaseVector v = transport.solve(w);
    const PhaseVector slope = mode == Mode::absorption ? PhaseVector(-v) : PhaseVector(apply_kernel(angular, v, n) - v);
    PhaseVector out = PhaseVector::Zero(w.size());
    for (std::size_t l = 0; l < angular.ns; ++l) {
        const auto i = static_cast<Eigen::Index>(phase_index(l, cell, n));
        out[i] = slope[i];
    }
    return out;
}

SystemFactorization::SystemFactorization(Mode mode, const Mesh& mesh, const AngularGrid& angular,
                                         const OpticalField& known)
    : mode_(mode),
      mesh_(mesh),
      angular_(angular),
      known_(mode == Mode::absorption ? known.sigma_s : known.sigma_a),
      green_(assemble_green(mode == Mode::absorption ? GreenVariant::free : GreenVariant::attenuated, known,
                            mesh, angular))
{
    if (known_.size() != static_cast<Eigen::Index>(mesh.num_cells()))
        throw InvalidArgument("SystemFactorization: known coefficient does not match mesh");
    std::vector<double> zeta = mesh.cell_volumes;
    a_ = assemble_A(green_.boundary, angular.weights, zeta);
    f_.reserve(mesh.num_sources());
    for (std::size_t q = 0; q < mesh.num_sources(); ++q) f_.push_back(assemble_F(mesh, angular, q));
}

OpticalField SystemFactorization::field_with(const Eigen::VectorXd& sigma_x) const
{
    if (sigma_x.size() != known_.size()) throw InvalidArgument("coefficient vector does not match mesh");
    if (mode_ == Mode::absorption) return {sigma_x, known_};
    return {known_, sigma_x};
}

PhaseVector SystemFactorization::apply_B(const Eigen::VectorXd& sigma_x, const PhaseVector& w) const
{
    const OpticalField field = field_with(sigma_x);
    if (mode_ == Mode::absorption) return apply_B_absorption(field, streaming(), angular_, w);
    return apply_B_scattering(field, streaming(), angular_, w);
}

PhaseVector SystemFactorization::apply_B_transpose(const Eigen::VectorXd& sigma_x, const PhaseVector& z) const
{
    const OpticalField field = field_with(sigma_x);
    const std::size_t n = num_cells();
    PhaseVector pre;
    if (mode_ == Mode::absorption) {
        pre = apply_kernel(angular_, scale_cells(field.sigma_s, z), n, true) - scale_cells(field.total(), z);
    } else {
        const PhaseVector sz = scale_cells(field.sigma_s, z);
        pre = apply_kernel(angular_, sz, n, true) - sz;
    }
    return streaming().solve_adjoint(pre);
}

PhaseVector SystemFactorization::apply_dB(std::size_t cell, const PhaseVector& w) const
{
    return apply_dB_dSigma(mode_, streaming(), angular_, cell, w);
}

AffineImage SystemFactorization::affine_image(const PhaseVector& w) const
{
    const std::size_t n = num_cells();
    const PhaseVector v = streaming().solve(w);
    const PhaseVector kv = apply_kernel(angular_, v, n);
    if (mode_ == Mode::absorption) return {scale_cells(known_, kv - v), -v};
    return {PhaseVector::Zero(w.size()), kv - v};
}

PhaseVector SystemFactorization::intermediate_variable(const Eigen::VectorXd& sigma_x, const PhaseVector& u,
                                                       std::size_t q) const
{
    const OpticalField field = field_with(sigma_x);
    const std::size_t n = num_cells();
    const PhaseVector ku = apply_kernel(angular_, u, n);
    if (mode_ == Mode::absorption)
        return scale_cells(field.sigma_s, ku) - scale_cells(field.total(), u) - F(q);
    return scale_cells(field.sigma_s, ku - u) - F(q);
}

Eigen::MatrixXd SystemFactorization::dense_B(const Eigen::VectorXd& sigma_x) const
{
    const auto n = static_cast<Eigen::Index>(phase_size());
    if (n > 4096) throw InvalidArgument("dense_B: phase space too large to materialize");
    Eigen::MatrixXd b(n, n);
    PhaseVector e = PhaseVector::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        e[k] = 1.0;
        b.col(k) = apply_B(sigma_x, e);
        e[k] = 0.0;
    }
    return b;
}

}  // namespace rtsom
