#pragma once

// Synthetic-data protocol: forward data on a refined mesh, multiplicative
// noise, restriction to the inversion mesh, error metric and the canonical
// phantoms.

#include "rtsom/grid.hpp"
#include "rtsom/medium.hpp"
#include "rtsom/operators.hpp"
#include "rtsom/recon.hpp"
#include "rtsom/spectral.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rtsom {

struct ExperimentSpec {
    std::string name = "experiment";
    PhantomSpec phantom;
    Mode mode = Mode::absorption;
    Rect domain{0.0, 0.0, 2.0, 2.0};
    std::size_t nx = 40;
    std::size_t ny = 40;
    std::size_t ns = 16;
    double g = 0.0;
    std::size_t forward_factor = 2;
    std::size_t forward_ns = 32;
    std::size_t sources = 8;
    std::size_t detectors = 80;
    std::vector<double> noise_levels{0.0};
    std::uint64_t seed = 20240607;

    /// Throws InvalidArgument when the forward mesh is not strictly finer.
    void validate() const;
};

Mesh inversion_mesh(const ExperimentSpec& spec);
Mesh forward_mesh(const ExperimentSpec& spec);
AngularGrid inversion_angular(const ExperimentSpec& spec);
AngularGrid forward_angular(const ExperimentSpec& spec);

/// Noiseless currents J_q from forward solves on the refined mesh.
std::vector<Eigen::VectorXd> generate_synthetic_data(const ExperimentSpec& spec, const ForwardOptions& options = {});

/// Per-stream seed from the base seed, the noise level and the source index.
std::uint64_t noise_seed(std::uint64_t base, double gamma_percent, std::size_t stream);

/// J_i (1 + gamma 1e-2 r_i) with r_i uniform on [-1, 1] from mt19937_64:
/// r = 2 ((x >> 11) 2^-53) - 1. gamma = 0 returns the input unchanged.
Eigen::VectorXd add_noise(const Eigen::VectorXd& data, double gamma_percent, std::uint64_t seed);

/// Noisy copies of every source's data with per-source streams.
std::vector<Eigen::VectorXd> add_noise(const std::vector<Eigen::VectorXd>& data, double gamma_percent,
                                       std::uint64_t base_seed);

/// Volume-weighted block average onto a mesh that the fine mesh refines by an
/// integer factor. Throws InvalidArgument for non-nested meshes.
Eigen::VectorXd restrict_to_inversion_mesh(const Eigen::VectorXd& fine, const Mesh& fine_mesh,
                                           const Mesh& coarse_mesh);
OpticalField restrict_to_inversion_mesh(const OpticalField& fine, const Mesh& fine_mesh, const Mesh& coarse_mesh);

/// |est - truth|_L2 / |truth|_L2 with cell volumes as weights.
double relative_l2_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth, const Mesh& mesh);

/// Phantoms I-IV on [0,2]^2 (background sigma_a 0.1, sigma_s 8):
///   I   disk r 0.3 at (1,1), sigma_a 0.2
///   II  rectangle [0.5,1.5] x [0.8,1.2], sigma_a 0.2
///   III L-shaped union of two bars, sigma_a 0.2
///   IV  sigma_a disk r 0.3 at (1.3,1.4) of 0.2, sigma_s disk r 0.3 at (0.7,0.7) of 16
PhantomSpec canonical_phantom(int experiment);
/// Desk-scale spec for an experiment; IV reconstructs scattering.
ExperimentSpec canonical_experiment(int experiment);

/// Truth and known coefficient on the inversion mesh.
struct InversionTruth {
    OpticalField field;       // restricted fine-mesh rasterization
    Eigen::VectorXd unknown;  // the coefficient being reconstructed
};
InversionTruth inversion_truth(const ExperimentSpec& spec);

struct NoiseRun {
    double gamma_percent = 0.0;
    ReconResult result;
    double relative_error = 0.0;
    double seconds = 0.0;
};

struct ExperimentOutcome {
    SvdCache cache;
    InversionTruth truth;
    std::vector<NoiseRun> runs;
    double svd_seconds = 0.0;
    double data_seconds = 0.0;
};

/// Full pipeline: data, system and SVD (unless a cache is supplied), then one
/// reconstruction per noise level.
ExperimentOutcome run_experiment(const ExperimentSpec& spec, const ReconConfig& config,
                                 const SvdCache* cache = nullptr);

}  // namespace rtsom
