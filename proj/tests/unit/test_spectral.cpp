#include "rtsom/errors.hpp"
#include "rtsom/spectral.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace rtsom;

namespace {

Eigen::MatrixXd orthonormal_columns(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed)
{
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(testing::random_matrix(rows, cols, seed));
    return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

Eigen::MatrixXd with_spectrum(const Eigen::VectorXd& mu, Eigen::Index cols, std::uint64_t seed)
{
    const Eigen::Index nd = mu.size();
    return orthonormal_columns(nd, nd, seed) * mu.asDiagonal() * orthonormal_columns(cols, nd, seed + 1).transpose();
}

double orthonormality_error(const Eigen::MatrixXd& q)
{
    return (q.transpose() * q - Eigen::MatrixXd::Identity(q.cols(), q.cols())).cwiseAbs().maxCoeff();
}

CacheErrorKind load_error(const std::string& path, const Digest* expected = nullptr)
{
    try {
        if (expected)
            (void)load_cache(path, *expected);
        else
            (void)load_cache(path);
    } catch (const CacheError& e) {
        return e.kind();
    }
    FAIL("load_cache succeeded on a damaged file");
    return CacheErrorKind::io;
}

void patch(const std::string& path, std::streamoff offset, const std::string& bytes)
{
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(offset);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("padded diagonal matrix")
{
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 7);
    a(0, 0) = 3.0;
    a(1, 1) = 2.0;
    a(2, 2) = 1.0;
    const SvdCache c = compute_svd(a);
    CHECK((c.mu - Eigen::Vector3d(3.0, 2.0, 1.0)).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((c.psi - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((c.phi - Eigen::MatrixXd::Identity(7, 3)).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(c.rank() == 3);
}

TEST_CASE("random wide matrix: exact factorization and singular relations")
{
    const Eigen::MatrixXd a = testing::random_matrix(6, 40, 101);
    const SvdCache c = compute_svd(a);
    const Eigen::MatrixXd rebuilt = c.psi * c.mu.asDiagonal() * c.phi.transpose();
    CHECK((a - rebuilt).norm() / a.norm() <= 1e-12);
    CHECK(orthonormality_error(c.psi) <= 1e-12);
    CHECK(orthonormality_error(c.phi) <= 1e-12);
    for (Eigen::Index i = 0; i < 6; ++i) {
        CHECK((a * c.phi.col(i) - c.mu[i] * c.psi.col(i)).norm() <= 1e-12 * c.mu[0]);
        CHECK((a.transpose() * c.psi.col(i) - c.mu[i] * c.phi.col(i)).norm() <= 1e-12 * c.mu[0]);
        if (i > 0) CHECK(c.mu[i] <= c.mu[i - 1]);
    }
}

TEST_CASE("singular values agree with a reference SVD up to condition 1e6")
{
    for (std::uint64_t seed : {7u, 8u, 9u}) {
        const Eigen::VectorXd mu = Eigen::VectorXd::LinSpaced(20, 0.0, -6.0).unaryExpr([](double e) { return std::pow(10.0, e); });
        const Eigen::MatrixXd a = with_spectrum(mu * 3.7, 60, seed);
        const SvdCache c = compute_svd(a);
        const Eigen::VectorXd ref = Eigen::BDCSVD<Eigen::MatrixXd>(a).singularValues();
        CHECK(((c.mu - ref).array() / ref.array()).abs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("rank counts singular values above the null threshold")
{
    const Eigen::MatrixXd a = testing::random_matrix(5, 3, 1) * testing::random_matrix(3, 30, 2);
    const SvdCache c = compute_svd(a);
    CHECK(c.rank() == 3);
    CHECK(c.mu[3] < kNullThreshold * c.mu[0]);
}

TEST_CASE("signal and noise subspaces are orthogonal")
{
    const SvdCache c = compute_svd(testing::random_matrix(12, 50, 33));
    const std::size_t l = 5;
    const Eigen::MatrixXd cross = c.phi.leftCols(l).transpose() * c.phi.rightCols(12 - l);
    CHECK(cross.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("compute_svd preconditions and determinism")
{
    CHECK_THROWS_AS(compute_svd(testing::random_matrix(5, 3, 1)), InvalidArgument);
    Eigen::MatrixXd bad = testing::random_matrix(2, 4, 1);
    bad(1, 2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(compute_svd(bad), NumericalError);
    const Eigen::MatrixXd a = testing::random_matrix(8, 30, 4);
    const SvdCache c1 = compute_svd(a), c2 = compute_svd(a);
    CHECK(c1.mu == c2.mu);
    CHECK(c1.psi == c2.psi);
    CHECK(c1.phi == c2.phi);
    for (Eigen::Index i = 0; i < 8; ++i) {
        Eigen::Index k = 0;
        c1.psi.col(i).cwiseAbs().maxCoeff(&k);
        CHECK(c1.psi(k, i) > 0.0);
    }
}

TEST_CASE("jump policy picks the dominant gap")
{
    SvdCache c;
    c.mu.resize(6);
    c.mu << 1.0, 0.9, 1e-8, 0.9e-8, 0.8e-8, 0.7e-8;
    CHECK(select_L(c, {}, LPolicy::jump()) == 2);
    c.mu << 1.0, 0.9, 0.8, 0.7, 0.6, 0.5;  // no gap above the factor
    CHECK(select_L(c, {}, LPolicy::jump()) == 6);
}

TEST_CASE("fixed policy clamps to the detector count")
{
    SvdCache c;
    c.mu = Eigen::VectorXd::LinSpaced(80, 1.0, 0.01);
    CHECK(select_L(c, {}, LPolicy::fixed(50)) == 50);
    CHECK(select_L(c, {}, LPolicy::fixed(500)) == 80);
    CHECK(select_L(c, {}, LPolicy::fixed(0)) == 1);
}

TEST_CASE("projection policy lands at the noise-floor crossing")
{
    const Eigen::Index nd = 40;
    const Eigen::VectorXd mu =
        Eigen::VectorXd::LinSpaced(nd, 0.0, -(nd - 1) / 4.0).unaryExpr([](double e) { return std::pow(10.0, e); });
    const Eigen::MatrixXd a = with_spectrum(mu, 120, 404);
    const SvdCache c = compute_svd(a);

    // consistent data from a true field with unit coefficients in the right
    // singular basis, plus noise whose every left-mode projection is 1e-3 |J|
    std::vector<Eigen::VectorXd> data;
    for (std::uint64_t q = 0; q < 5; ++q) {
        const Eigen::VectorXd clean = a * (c.phi * Eigen::VectorXd::Ones(nd));
        const Eigen::VectorXd signs = testing::random_vector(nd, 500 + q).unaryExpr([](double x) { return x < 0 ? -1.0 : 1.0; });
        data.push_back(clean + 1e-3 * clean.norm() * (c.psi * signs));
    }
    // brute-force crossing: last index with mu_i / mu_1 >= 1e-3
    std::size_t crossing = 0;
    for (Eigen::Index i = 0; i < nd; ++i)
        if (c.mu[i] / c.mu[0] >= 1e-3) crossing = static_cast<std::size_t>(i + 1);
    REQUIRE(crossing >= 10);
    REQUIRE(crossing <= 16);
    const std::size_t l = select_L(c, data, LPolicy::projection());
    CHECK(l + 2 >= crossing);
    CHECK(l <= crossing + 2);
    CHECK(select_L(c, data, LPolicy::projection()) == l);  // deterministic
}

TEST_CASE("projection policy rejects empty or all-zero data")
{
    const SvdCache c = compute_svd(testing::random_matrix(4, 10, 5));
    CHECK_THROWS_AS(select_L(c, {}, LPolicy::projection()), InvalidArgument);
    CHECK_THROWS_AS(select_L(c, {Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4)}, LPolicy::projection()),
                    InvalidArgument);
}

TEST_CASE("cache round trip is bit exact")
{
    testing::TempDir dir("cache");
    SvdCache c = compute_svd(testing::random_matrix(7, 25, 6));
    c.meta.hash.fill(0xab);
    const std::string path = dir / "a.trsc";
    save_cache(c, path);
    const SvdCache back = load_cache(path, c.meta.hash);
    CHECK(back.mu == c.mu);
    CHECK(back.psi == c.psi);
    CHECK(back.phi == c.phi);
    CHECK(back.meta.hash == c.meta.hash);
    CHECK(back.meta.version == kCacheFormatVersion);
    CHECK(std::filesystem::file_size(path) == 4 + 4 + 32 + 16 + 8 * (7 + 49 + 25 * 7));
}

TEST_CASE("damaged or foreign caches are refused with distinct errors")
{
    testing::TempDir dir("cache_bad");
    SvdCache c = compute_svd(testing::random_matrix(5, 12, 7));
    c.meta.hash.fill(0x11);
    const std::string path = dir / "c.trsc";

    save_cache(c, path);
    Digest other = c.meta.hash;
    other[31] ^= 1;
    CHECK(load_error(path, &other) == CacheErrorKind::hash_mismatch);

    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 8);
    CHECK(load_error(path) == CacheErrorKind::truncated);

    save_cache(c, path);
    patch(path, 0, "XRSC");
    CHECK(load_error(path) == CacheErrorKind::bad_magic);

    save_cache(c, path);
    patch(path, 4, std::string("\x02\x00\x00\x00", 4));
    CHECK(load_error(path) == CacheErrorKind::version_mismatch);

    save_cache(c, path);
    std::ofstream(path, std::ios::binary | std::ios::app) << "junk";
    CHECK(load_error(path) == CacheErrorKind::shape_mismatch);

    CHECK(load_error(dir / "missing.trsc") == CacheErrorKind::io);
}

TEST_CASE("fingerprint tracks everything A depends on")
{
    const Mesh mesh = build_mesh(6, 6, Rect{0.0, 0.0, 2.0, 2.0}, 12, 2);
    const AngularGrid ang = build_angular(8, 0.0);
    const Eigen::VectorXd k1 = Eigen::VectorXd::Constant(36, 0.1), k2 = Eigen::VectorXd::Constant(36, 0.2);
    const Digest base = system_fingerprint(mesh, ang, Mode::absorption, k1);
    CHECK(system_fingerprint(mesh, ang, Mode::absorption, k2) == base);
    CHECK(system_fingerprint(mesh, build_angular(12, 0.0), Mode::absorption, k1) != base);
    CHECK(system_fingerprint(mesh, build_angular(8, 0.1), Mode::absorption, k1) != base);
    CHECK(system_fingerprint(build_mesh(6, 6, Rect{0.0, 0.0, 2.0, 2.0}, 16, 2), ang, Mode::absorption, k1) != base);
    CHECK(system_fingerprint(mesh, ang, Mode::scattering, k1) != base);
    CHECK(system_fingerprint(mesh, ang, Mode::scattering, k1) != system_fingerprint(mesh, ang, Mode::scattering, k2));
}
