#pragma once

// Factorized form of the discrete transport problem for one source q:
//
//     J_q = A U_q,        U_q = B(Sigma_x) U_q - F_q.
//
// A depends only on the grids (and, in scattering mode, on the known
// absorption), B is affine in the unknown coefficient Sigma_x. With the
// weighted kernel matrix K (entries eta_{l'} k_{ll'}) and T the streaming
// operator of the mode:
//
//   absorption:  B w = (K (x) Sigma_s - I (x) (Sigma_a + Sigma_s)) T_0^{-1} w
//   scattering:  B w = ((K - I) (x) Sigma_s) T_a^{-1} w
//
// Here T^{-1} = G_v (H (x) S), so both forms are the volume-Green form.

#include "rtsom/grid.hpp"
#include "rtsom/medium.hpp"
#include "rtsom/transport.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace rtsom {

enum class Mode { absorption, scattering };

const char* to_string(Mode mode);

/// A = Gb (H (x) S): entry (d, l N + m) = Gb(d, l N + m) eta_l zeta_m.
Eigen::MatrixXd assemble_A(const Eigen::MatrixXd& green_boundary, const std::vector<double>& eta,
                           const std::vector<double>& zeta);

/// F_q = -(volumetric inflow image of source q); nonzero only in boundary
/// cells on the source support, at directions entering the domain.
PhaseVector assemble_F(const Mesh& mesh, const AngularGrid& angular, std::size_t source_index);

/// B w for the absorption formulation; `transport` must be free streaming.
PhaseVector apply_B_absorption(const OpticalField& sigma, const StreamingOperator& transport,
                               const AngularGrid& angular, const PhaseVector& w);

/// B w for the scattering formulation; `transport` carries the known absorption.
PhaseVector apply_B_scattering(const OpticalField& sigma, const StreamingOperator& transport,
                               const AngularGrid& angular, const PhaseVector& w);

/// dB/dSigma_x,jj applied to w. Absorption: -(I (x) E_jj) T_0^{-1} w.
/// Scattering: ((K - I) (x) E_jj) T_a^{-1} w. Nonzero only on cell j's fiber.
PhaseVector apply_dB_dSigma(Mode mode, const StreamingOperator& transport, const AngularGrid& angular,
                            std::size_t cell, const PhaseVector& w);

/// B(Sigma_x) w = base + Sigma_x (broadcast over directions) * slope.
struct AffineImage {
    PhaseVector base;
    PhaseVector slope;
};

class SystemFactorization {
public:
    /// `known` supplies the coefficient that is not reconstructed: sigma_s in
    /// absorption mode, sigma_a in scattering mode. The other half is unused.
    SystemFactorization(Mode mode, const Mesh& mesh, const AngularGrid& angular, const OpticalField& known);

    Mode mode() const { return mode_; }
    const Mesh& mesh() const { return mesh_; }
    const AngularGrid& angular() const { return angular_; }
    const GreenSet& green() const { return green_; }
    const StreamingOperator& streaming() const { return green_.streaming; }
    const Eigen::MatrixXd& A() const { return a_; }
    const PhaseVector& F(std::size_t q) const { return f_.at(q); }
    std::size_t num_sources() const { return f_.size(); }
    std::size_t num_cells() const { return mesh_.num_cells(); }
    std::size_t phase_size() const { return mesh_.num_cells() * angular_.ns; }
    const Eigen::VectorXd& known() const { return known_; }

    /// Full optical field with Sigma_x substituted for the unknown coefficient.
    OpticalField field_with(const Eigen::VectorXd& sigma_x) const;

    PhaseVector apply_B(const Eigen::VectorXd& sigma_x, const PhaseVector& w) const;
    PhaseVector apply_B_transpose(const Eigen::VectorXd& sigma_x, const PhaseVector& z) const;
    PhaseVector apply_dB(std::size_t cell, const PhaseVector& w) const;
    AffineImage affine_image(const PhaseVector& w) const;

    /// The intermediate variable U of a forward solution u for source q:
    /// U = T u, which equals the scattering/absorption source of the mode minus F_q.
    PhaseVector intermediate_variable(const Eigen::VectorXd& sigma_x, const PhaseVector& u,
                                      std::size_t q) const;

    /// Dense B; only for phase_size() <= 4096.
    Eigen::MatrixXd dense_B(const Eigen::VectorXd& sigma_x) const;

private:
    Mode mode_;
    Mesh mesh_;
    AngularGrid angular_;
    Eigen::VectorXd known_;
    GreenSet green_;
    Eigen::MatrixXd a_;
    std::vector<PhaseVector> f_;
};

}  // namespace rtsom
