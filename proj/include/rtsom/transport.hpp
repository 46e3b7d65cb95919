#pragma once

// Discrete streaming operator, forward transport solver and the adjoint
// boundary/volume Green operators.
//
// Phase-space vectors use the flattened layout i = l * N_cells + m
// (direction-major), so direction l occupies one contiguous block.
//
// The streaming operator T is written per unit volume: for direction v and
// cell m,
//     (T u)_m = (|vx|/hx + |vy|/hy + s_m) u_m - |vx|/hx u_upx - |vy|/hy u_upy
// with first-order upwinding and zero inflow. Boundary inflow enters through
// `inflow_source`. Every direction block is triangular in the sweep order of
// that direction, so T^{-1} and T^{-t} cost one sweep each.

#include "rtsom/grid.hpp"
#include "rtsom/medium.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace rtsom {

using PhaseVector = Eigen::VectorXd;

inline std::size_t phase_index(std::size_t l, std::size_t m, std::size_t cells) { return l * cells + m; }

class StreamingOperator {
public:
    /// `attenuation` holds the per-cell removal coefficient added to the
    /// streaming term; all zeros gives free streaming.
    StreamingOperator(const Mesh& mesh, const AngularGrid& angular, Eigen::VectorXd attenuation);

    static StreamingOperator free_streaming(const Mesh& mesh, const AngularGrid& angular);

    std::size_t num_cells() const { return nx_ * ny_; }
    std::size_t num_directions() const { return directions_.size(); }
    std::size_t size() const { return num_cells() * num_directions(); }
    const Eigen::VectorXd& attenuation() const { return attenuation_; }

    /// T^{-1} rhs, one forward sweep per direction.
    PhaseVector solve(const PhaseVector& rhs) const;
    /// T^{-t} rhs, one reversed sweep per direction.
    PhaseVector solve_adjoint(const PhaseVector& rhs) const;
    /// T u with zero inflow.
    PhaseVector apply(const PhaseVector& u) const;

    void solve_direction(std::size_t l, const double* rhs, double* out) const;
    void solve_adjoint_direction(std::size_t l, const double* rhs, double* out) const;

    /// Volumetric image of the boundary inflow: the term that moves to the
    /// right-hand side when inflow values f (one per boundary face) are
    /// imposed on the incoming part of the boundary.
    PhaseVector inflow_source(std::span<const double> inflow) const;

    /// Explicit matrix of T; only meant for small oracle problems.
    Eigen::MatrixXd dense() const;

private:
    std::size_t nx_;
    std::size_t ny_;
    double hx_;
    double hy_;
    std::vector<Point2> directions_;
    std::vector<BoundaryFace> faces_;
    std::vector<double> volumes_;
    Eigen::VectorXd attenuation_;
};

/// (scatter (x) I) u: applies the weighted kernel eta_{l'} k_{ll'} in angle,
/// cell by cell. With `transpose` the kernel transpose is used.
PhaseVector apply_kernel(const AngularGrid& angular, const PhaseVector& u, std::size_t cells,
                         bool transpose = false);

/// Multiplies every direction block entrywise by the per-cell vector `c`.
PhaseVector scale_cells(const Eigen::VectorXd& c, const PhaseVector& u);

struct ForwardOptions {
    double tolerance = 1e-12;  // relative update between sweeps
    int max_sweeps = 5000;
};

struct ForwardSolution {
    PhaseVector u;
    int sweeps = 0;
    double last_update = 0.0;
};

/// Source iteration for  v.grad u + (sa + ss) u = ss sum_l' eta k u  with
/// isotropic inflow f on the incoming boundary.
ForwardSolution solve_forward(const OpticalField& field, const AngularGrid& angular, const Mesh& mesh,
                              std::span<const double> inflow, const ForwardOptions& options = {});

ForwardSolution solve_forward(const OpticalField& field, const AngularGrid& angular, const Mesh& mesh,
                              std::size_t source_index, const ForwardOptions& options = {});

/// Outgoing current at every detector, sum over v.n > 0 of eta (v.n) u in
/// the boundary cell owning the detector face.
Eigen::VectorXd measure_current(const PhaseVector& u, const Mesh& mesh, const AngularGrid& angular);

/// Row d of the measurement matrix M, so that measure_current(u)[d] = M_d . u.
PhaseVector measurement_row(std::size_t detector, const Mesh& mesh, const AngularGrid& angular);

enum class GreenVariant { free, attenuated };

/// Discrete adjoint Green operators. With W = H (x) S the diagonal of
/// quadrature weights eta_l zeta_m:
///   A  = M T^{-1},   Gb = A W^{-1},   G_v W = T^{-1}.
struct GreenSet {
    GreenVariant variant = GreenVariant::free;
    StreamingOperator streaming;
    Eigen::MatrixXd boundary;  // Gb, N_d x (N_cells N_S)
    Eigen::VectorXd weights;   // diagonal of H (x) S
};

/// Quadrature weights eta_l zeta_m in phase layout.
Eigen::VectorXd phase_weights(const Mesh& mesh, const AngularGrid& angular);

/// Gb by one adjoint solve per detector. The attenuated variant uses the
/// field's absorption; the free variant ignores the field.
Eigen::MatrixXd assemble_green_boundary(GreenVariant variant, const OpticalField& field, const Mesh& mesh,
                                        const AngularGrid& angular);

GreenSet assemble_green(GreenVariant variant, const OpticalField& field, const Mesh& mesh,
                        const AngularGrid& angular);

/// G_v w (or G_v^t w) through a single streaming solve.
PhaseVector apply_green_volume(const GreenSet& green, const PhaseVector& w, bool transpose = false);

PhaseVector apply_green_volume(GreenVariant variant, const OpticalField& field, const Mesh& mesh,
                               const AngularGrid& angular, const PhaseVector& w, bool transpose = false);

}  // namespace rtsom
