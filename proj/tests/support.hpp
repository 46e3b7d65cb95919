#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace testing {

inline Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
{
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(gen);
    return v;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed)
{
    const Eigen::VectorXd v = random_vector(rows * cols, seed);
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

inline double rel_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    const double den = b.norm();
    return den > 0.0 ? (a - b).norm() / den : (a - b).norm();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("rtsom_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

}  // namespace testing
