#include "rtsom/errors.hpp"
#include "rtsom/operators.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace rtsom;

namespace {

const Rect kSquare{0.0, 0.0, 2.0, 2.0};

OpticalField blob_field(const Mesh& mesh, std::uint64_t seed)
{
    const auto n = static_cast<Eigen::Index>(mesh.num_cells());
    return {testing::random_vector(n, seed, 0.05, 0.4), testing::random_vector(n, seed + 1, 2.0, 6.0)};
}

Eigen::VectorXd unknown_of(Mode mode, const OpticalField& f) { return mode == Mode::absorption ? f.sigma_a : f.sigma_s; }

}  // namespace

TEST_CASE("A for a single cell and direction is the scaled Green row")
{
    Eigen::MatrixXd gb(3, 1);
    gb << 1.0, 2.0, 4.0;
    const Eigen::MatrixXd a = assemble_A(gb, {1.0}, {0.25});
    CHECK(a == gb * 0.25);
}

TEST_CASE("A columns are Green columns times eta_l zeta_m")
{
    const Eigen::MatrixXd gb = testing::random_matrix(6, 36, 1);
    const Eigen::VectorXd eta = testing::random_vector(4, 2, 0.1, 1.0);
    const Eigen::VectorXd zeta = testing::random_vector(9, 3, 0.1, 1.0);
    const std::vector<double> ev(eta.data(), eta.data() + 4), zv(zeta.data(), zeta.data() + 9);
    const Eigen::MatrixXd a = assemble_A(gb, ev, zv);
    for (std::size_t l = 0; l < 4; ++l)
        for (std::size_t m = 0; m < 9; ++m) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(36);
            const auto i = static_cast<Eigen::Index>(l * 9 + m);
            e[i] = 1.0;
            CHECK(testing::rel_diff(a * e, gb.col(i) * (ev[l] * zv[m])) <= 1e-15);
        }
    CHECK(Eigen::FullPivLU<Eigen::MatrixXd>(a).rank() <= 6);
    CHECK_THROWS_AS(assemble_A(gb, ev, {1.0, 2.0}), InvalidArgument);
}

TEST_CASE("A does not depend on the unknown coefficient")
{
    const Mesh mesh = build_mesh(6, 6, kSquare, 12, 2);
    const AngularGrid ang = build_angular(8, 0.3);
    OpticalField f1 = blob_field(mesh, 10), f2 = blob_field(mesh, 20);
    CHECK(SystemFactorization(Mode::absorption, mesh, ang, f1).A() ==
          SystemFactorization(Mode::absorption, mesh, ang, f2).A());
    f2.sigma_a = f1.sigma_a;
    CHECK(SystemFactorization(Mode::scattering, mesh, ang, f1).A() ==
          SystemFactorization(Mode::scattering, mesh, ang, f2).A());
    // ...but the scattering-mode A does see the absorption
    CHECK(SystemFactorization(Mode::scattering, mesh, ang, blob_field(mesh, 30)).A() !=
          SystemFactorization(Mode::scattering, mesh, ang, f1).A());
}

TEST_CASE("A equals Gb times the quadrature weights")
{
    const Mesh mesh = build_mesh(5, 4, kSquare, 9, 2);
    const AngularGrid ang = build_angular(6, 0.0);
    const SystemFactorization sys(Mode::absorption, mesh, ang, blob_field(mesh, 1));
    for (std::size_t l = 0; l < ang.ns; ++l)
        for (std::size_t m = 0; m < 20; ++m) {
            const auto i = static_cast<Eigen::Index>(l * 20 + m);
            CHECK((sys.A().col(i) - sys.green().boundary.col(i) * ang.weights[l] * mesh.cell_volumes[m])
                      .cwiseAbs()
                      .maxCoeff() <= 1e-15 * sys.A().cwiseAbs().maxCoeff());
        }
}

TEST_CASE("B vanishes for zero input and zero coefficients")
{
    const Mesh mesh = build_mesh(5, 5, kSquare, 8, 2);
    const AngularGrid ang = build_angular(8, 0.0);
    const StreamingOperator free = StreamingOperator::free_streaming(mesh, ang);
    const PhaseVector w = testing::random_vector(200, 4);
    CHECK(apply_B_absorption(blob_field(mesh, 5), free, ang, PhaseVector::Zero(200)).isZero(0.0));
    CHECK(apply_B_absorption(OpticalField::constant(25, 0.0, 0.0), free, ang, w).isZero(0.0));
    const StreamingOperator att(mesh, ang, Eigen::VectorXd::Constant(25, 0.2));
    CHECK(apply_B_scattering(OpticalField::constant(25, 0.2, 0.0), att, ang, w).isZero(0.0));
    CHECK(apply_B_scattering(blob_field(mesh, 5), att, ang, PhaseVector::Zero(200)).isZero(0.0));
}

TEST_CASE("scattering-mode B is linear in the scattering coefficient")
{
    const Mesh mesh = build_mesh(5, 5, kSquare, 8, 2);
    const AngularGrid ang = build_angular(8, 0.4);
    const SystemFactorization sys(Mode::scattering, mesh, ang, blob_field(mesh, 6));
    const Eigen::VectorXd s = testing::random_vector(25, 7, 1.0, 3.0);
    const PhaseVector w = testing::random_vector(200, 8);
    CHECK(testing::rel_diff(sys.apply_B(2.0 * s, w), 2.0 * sys.apply_B(s, w)) <= 1e-15);
}

TEST_CASE("B is affine in the unknown: base plus coefficient times slope")
{
    const Mesh mesh = build_mesh(6, 5, kSquare, 8, 2);
    const AngularGrid ang = build_angular(8, 0.2);
    for (Mode mode : {Mode::absorption, Mode::scattering}) {
        const SystemFactorization sys(mode, mesh, ang, blob_field(mesh, 11));
        const PhaseVector w = testing::random_vector(240, 12);
        const Eigen::VectorXd s = testing::random_vector(30, 13, 0.1, 2.0);
        const AffineImage img = sys.affine_image(w);
        CHECK(testing::rel_diff(img.base + scale_cells(s, img.slope), sys.apply_B(s, w)) <= 1e-13);
    }
}

TEST_CASE("derivative of B is supported on one cell and matches finite differences")
{
    const Mesh mesh = build_mesh(5, 4, kSquare, 8, 2);
    const AngularGrid ang = build_angular(8, 0.5);
    for (Mode mode : {Mode::absorption, Mode::scattering}) {
        const SystemFactorization sys(mode, mesh, ang, blob_field(mesh, 14));
        const Eigen::VectorXd s = testing::random_vector(20, 15, 0.1, 2.0);
        const PhaseVector w = testing::random_vector(160, 16);
        for (std::size_t j : {0u, 7u, 19u}) {
            const PhaseVector d = sys.apply_dB(j, w);
            for (Eigen::Index i = 0; i < d.size(); ++i)
                if (static_cast<std::size_t>(i) % 20 != j) CHECK(d[i] == 0.0);
            const double eps = 1e-6;
            Eigen::VectorXd sp = s, sm = s;
            sp[static_cast<Eigen::Index>(j)] += eps;
            sm[static_cast<Eigen::Index>(j)] -= eps;
            const PhaseVector fd = (sys.apply_B(sp, w) - sys.apply_B(sm, w)) / (2.0 * eps);
            CHECK(testing::rel_diff(fd, d) <= 1e-8);
        }
        CHECK_THROWS_AS(sys.apply_dB(20, w), InvalidArgument);
    }
}

TEST_CASE("summing cell derivatives reproduces scattering-mode B at unit coefficient")
{
    const Mesh mesh = build_mesh(4, 4, kSquare, 8, 2);
    const AngularGrid ang = build_angular(8, 0.3);
    const SystemFactorization sys(Mode::scattering, mesh, ang, blob_field(mesh, 17));
    const PhaseVector w = testing::random_vector(128, 18);
    PhaseVector sum = PhaseVector::Zero(128);
    for (std::size_t j = 0; j < 16; ++j) sum += sys.apply_dB(j, w);
    CHECK(testing::rel_diff(sum, sys.apply_B(Eigen::VectorXd::Ones(16), w)) <= 1e-14);
}

TEST_CASE("F is zero without inflow and away from the boundary")
{
    Mesh mesh = build_mesh(6, 6, kSquare, 8, 4);
    const AngularGrid ang = build_angular(8, 0.0);
    for (std::size_t q = 0; q < 4; ++q) {
        const PhaseVector f = assemble_F(mesh, ang, q);
        CHECK(f.cwiseAbs().maxCoeff() > 0.0);
        for (std::size_t l = 0; l < 8; ++l)
            for (std::size_t j = 1; j + 1 < 6; ++j)
                for (std::size_t i = 1; i + 1 < 6; ++i) CHECK(f[static_cast<Eigen::Index>(l * 36 + mesh.cell_index(i, j))] == 0.0);
    }
    std::fill(mesh.source_intensity[2].begin(), mesh.source_intensity[2].end(), 0.0);
    CHECK(assemble_F(mesh, ang, 2).isZero(0.0));
    CHECK_THROWS_AS(assemble_F(mesh, ang, 4), InvalidArgument);
}

TEST_CASE("F entry of a left-edge cell for a rightward ordinate")
{
    // unit cells, so the face-length over volume factor is one
    const Mesh mesh = build_mesh(2, 2, kSquare, 4, 1);
    const AngularGrid beam = AngularGrid::from_directions({{1.0, 0.0}}, {1.0}, 0.0);
    const PhaseVector f = assemble_F(mesh, beam, 0);
    CHECK(f[static_cast<Eigen::Index>(mesh.cell_index(0, 0))] == -1.0);
    CHECK(f[static_cast<Eigen::Index>(mesh.cell_index(0, 1))] == -1.0);
    CHECK(f[static_cast<Eigen::Index>(mesh.cell_index(1, 0))] == 0.0);  // outflow side
}

TEST_CASE("B and its transpose are adjoint")
{
    const Mesh mesh = build_mesh(6, 6, kSquare, 8, 2);
    const AngularGrid ang = build_angular(8, 0.7);
    for (Mode mode : {Mode::absorption, Mode::scattering}) {
        const SystemFactorization sys(mode, mesh, ang, blob_field(mesh, 19));
        const Eigen::VectorXd s = testing::random_vector(36, 20, 0.1, 3.0);
        for (std::uint64_t k = 0; k < 3; ++k) {
            const PhaseVector w = testing::random_vector(288, 30 + k), z = testing::random_vector(288, 40 + k);
            const double lhs = sys.apply_B(s, w).dot(z), rhs = w.dot(sys.apply_B_transpose(s, z));
            CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
        }
    }
}

TEST_CASE("duality and fixed point hold for forward solutions")
{
    const Mesh mesh = build_mesh(10, 10, kSquare, 20, 4);
    const AngularGrid ang = build_angular(8, 0.3);
    const OpticalField field = blob_field(mesh, 50);
    for (Mode mode : {Mode::absorption, Mode::scattering}) {
        const SystemFactorization sys(mode, mesh, ang, field);
        const Eigen::VectorXd s = unknown_of(mode, field);
        for (std::size_t q = 0; q < 4; ++q) {
            const PhaseVector u = solve_forward(field, ang, mesh, q).u;
            const PhaseVector big_u = sys.intermediate_variable(s, u, q);
            CHECK(testing::rel_diff(big_u, sys.streaming().apply(u)) <= 1e-10);
            const Eigen::VectorXd j = measure_current(u, mesh, ang);
            CHECK(testing::rel_diff(sys.A() * big_u, j) <= 1e-10);
            CHECK(testing::rel_diff(sys.apply_B(s, big_u) - sys.F(q), big_u) <= 1e-10);
        }
    }
}

TEST_CASE("direct solve of the factorized system matches the forward model")
{
    for (auto [n, ns] : {std::pair<std::size_t, std::size_t>{8, 8}, {8, 16}, {6, 4}}) {
        const Mesh mesh = build_mesh(n, n, kSquare, 12, 3);
        const AngularGrid ang = build_angular(ns, 0.2);
        REQUIRE(n * n * ns <= 1024);
        const OpticalField field = blob_field(mesh, 60 + n);
        for (Mode mode : {Mode::absorption, Mode::scattering}) {
            const SystemFactorization sys(mode, mesh, ang, field);
            const Eigen::MatrixXd b = sys.dense_B(unknown_of(mode, field));
            const Eigen::MatrixXd i_minus_b = Eigen::MatrixXd::Identity(b.rows(), b.cols()) - b;
            const Eigen::PartialPivLU<Eigen::MatrixXd> lu(i_minus_b);
            for (std::size_t q = 0; q < 3; ++q) {
                const PhaseVector big_u = lu.solve(-sys.F(q));
                const Eigen::VectorXd direct = measure_current(solve_forward(field, ang, mesh, q).u, mesh, ang);
                CHECK(testing::rel_diff(sys.A() * big_u, direct) <= 1e-10);
            }
        }
    }
}

TEST_CASE("dense B agrees with the operator and refuses large grids")
{
    const Mesh mesh = build_mesh(4, 4, kSquare, 8, 2);
    const AngularGrid ang = build_angular(4, 0.0);
    const SystemFactorization sys(Mode::absorption, mesh, ang, blob_field(mesh, 70));
    const Eigen::VectorXd s = testing::random_vector(16, 71, 0.1, 1.0);
    const PhaseVector w = testing::random_vector(64, 72);
    CHECK(testing::rel_diff(sys.dense_B(s) * w, sys.apply_B(s, w)) <= 1e-14);

    const Mesh big = build_mesh(24, 24, kSquare, 8, 2);
    const SystemFactorization large(Mode::absorption, big, build_angular(8, 0.0), blob_field(big, 73));
    CHECK_THROWS_AS(large.dense_B(Eigen::VectorXd::Ones(576)), InvalidArgument);
}
