#pragma once

// Truncated SVD of the data matrix A, signal/noise split, truncation-level
// selection and the on-disk cache.
//
// Cache file layout (all integers and doubles little-endian):
//   "TRSC" | u32 version | 32-byte meta hash | u64 N_d | u64 N_phase |
//   mu[N_d] | Psi (N_d x N_d, column-major) | Phi_trunc (N_phase x N_d, column-major)

#include "rtsom/hash.hpp"
#include "rtsom/operators.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace rtsom {

inline constexpr std::uint32_t kCacheFormatVersion = 1;
/// Singular values below this fraction of mu_1 count as numerically zero.
inline constexpr double kNullThreshold = 1e-13;

struct SvdMeta {
    Digest hash{};
    std::int64_t created_unix = 0;  // in-memory only, not part of the file layout
    std::uint32_t version = kCacheFormatVersion;
};

struct SvdCache {
    Eigen::VectorXd mu;    // nonincreasing
    Eigen::MatrixXd psi;   // N_d x N_d, left singular vectors
    Eigen::MatrixXd phi;   // N_phase x N_d, first N_d right singular vectors
    SvdMeta meta;

    std::size_t num_detectors() const { return static_cast<std::size_t>(mu.size()); }
    std::size_t phase_size() const { return static_cast<std::size_t>(phi.rows()); }
    /// Number of singular values at or above kNullThreshold * mu_1. Columns
    /// past the rank are null-space directions and never used.
    std::size_t rank() const;
};

/// SVD of a wide matrix (N_d <= N_phase). Householder QR of A^t followed by a
/// one-sided Jacobi SVD of the N_d x N_d triangular factor. Signs are fixed so
/// the largest-magnitude entry of each psi is positive.
SvdCache compute_svd(const Eigen::MatrixXd& a);

/// Fingerprint of everything A depends on.
Digest system_fingerprint(const Mesh& mesh, const AngularGrid& angular, Mode mode,
                          const Eigen::VectorXd& known_coefficient);

struct LPolicy {
    enum class Kind { jump, projection, fixed };
    Kind kind = Kind::fixed;
    std::size_t fixed_value = 50;
    double jump_factor = 10.0;
    double plateau_factor = 0.5;

    static LPolicy fixed(std::size_t l) { return {Kind::fixed, l}; }
    static LPolicy jump(double factor = 10.0) { return {Kind::jump, 0, factor}; }
    static LPolicy projection(double plateau = 0.5) { return {Kind::projection, 0, 10.0, plateau}; }
};

/// jump: largest i maximizing mu_i / mu_{i+1} among ratios above the jump
///       factor (falls back to the numerical rank when no ratio qualifies).
/// projection: with p_j = median_q |psi_j^t J_q|, the turning point is the
///       index before the first j whose tail median (p_j..p_rank) exceeds
///       plateau_factor * p_j, i.e. where the projections stop decaying.
/// fixed: the given value clamped to [1, N_d].
std::size_t select_L(const SvdCache& cache, const std::vector<Eigen::VectorXd>& data, const LPolicy& policy);

void save_cache(const SvdCache& cache, const std::string& path);

/// Verifies magic, version and size. Throws CacheError.
SvdCache load_cache(const std::string& path);
/// As above, and refuses a cache whose meta hash differs from `expected`.
SvdCache load_cache(const std::string& path, const Digest& expected);

}  // namespace rtsom
