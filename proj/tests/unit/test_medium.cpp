#include "rtsom/errors.hpp"
#include "rtsom/medium.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace rtsom;

namespace {

const Rect kSquare{0.0, 0.0, 2.0, 2.0};

std::size_t cell_containing(const Mesh& mesh, Point2 p)
{
    const auto i = static_cast<std::size_t>((p.x - mesh.domain.x0) / mesh.hx);
    const auto j = static_cast<std::size_t>((p.y - mesh.domain.y0) / mesh.hy);
    return mesh.cell_index(i, j);
}

double disk_area_estimate(const Mesh& mesh, const OpticalField& f, double inside_value)
{
    double area = 0.0;
    for (std::size_t m = 0; m < mesh.num_cells(); ++m)
        if (f.sigma_a[static_cast<Eigen::Index>(m)] == inside_value) area += mesh.cell_volumes[m];
    return area;
}

}  // namespace

TEST_CASE("absorbing disk at (1.3, 1.4) over a 0.1 background")
{
    const Mesh mesh = build_mesh(40, 40, kSquare, 80, 8);
    PhantomSpec spec;
    spec.background_a = 0.1;
    spec.background_s = 8.0;
    spec.inclusions.push_back({Disk{{1.3, 1.4}, 0.3}, 0.2, 8.0});
    const OpticalField f = rasterize_phantom(spec, mesh);
    CHECK(f.sigma_a[static_cast<Eigen::Index>(cell_containing(mesh, {1.3, 1.4}))] == 0.2);
    CHECK(f.sigma_a[static_cast<Eigen::Index>(cell_containing(mesh, {0.2, 0.2}))] == 0.1);
    CHECK((f.sigma_s.array() == 8.0).all());
}

TEST_CASE("no inclusions gives the constant background")
{
    const Mesh mesh = build_mesh(12, 7, kSquare, 4, 1);
    PhantomSpec spec;
    spec.background_a = 0.05;
    spec.background_s = 8.0;
    const OpticalField f = rasterize_phantom(spec, mesh);
    CHECK(f.size() == 84);
    CHECK((f.sigma_s.array() == 8.0).all());
    CHECK((f.sigma_a.array() == 0.05).all());
}

TEST_CASE("a disk covering the domain replaces every cell")
{
    const Mesh mesh = build_mesh(9, 9, kSquare, 4, 1);
    PhantomSpec spec;
    spec.inclusions.push_back({Disk{{1.0, 1.0}, 5.0}, 0.7, 3.0});
    const OpticalField f = rasterize_phantom(spec, mesh);
    CHECK((f.sigma_a.array() == 0.7).all());
    CHECK((f.sigma_s.array() == 3.0).all());
}

TEST_CASE("later inclusions override earlier ones")
{
    const Mesh mesh = build_mesh(20, 20, kSquare, 4, 1);
    PhantomSpec spec;
    spec.inclusions.push_back({AxisRect{{0.0, 0.0}, {2.0, 1.0}}, 0.3, 8.0});
    spec.inclusions.push_back({Disk{{1.0, 1.0}, 0.5}, 0.5, 9.0});
    const OpticalField f = rasterize_phantom(spec, mesh);
    CHECK(f.sigma_a[static_cast<Eigen::Index>(cell_containing(mesh, {1.02, 0.97}))] == 0.5);
    CHECK(f.sigma_a[static_cast<Eigen::Index>(cell_containing(mesh, {0.1, 0.1}))] == 0.3);
    CHECK(f.sigma_a[static_cast<Eigen::Index>(cell_containing(mesh, {0.1, 1.9}))] == 0.1);
}

TEST_CASE("polygon membership by cell center")
{
    const Shape tri = Polygon{{{0.0, 0.0}, {2.0, 0.0}, {0.0, 2.0}}};
    CHECK(contains(tri, {0.5, 0.5}));
    CHECK_FALSE(contains(tri, {1.5, 1.5}));
    const Mesh mesh = build_mesh(10, 10, kSquare, 4, 1);
    PhantomSpec spec;
    spec.inclusions.push_back({tri, 0.2, 8.0});
    const OpticalField f = rasterize_phantom(spec, mesh);
    for (std::size_t m = 0; m < mesh.num_cells(); ++m) {
        const Point2 c = mesh.cell_centers[m];
        CHECK((f.sigma_a[static_cast<Eigen::Index>(m)] == 0.2) == (c.x + c.y < 2.0));
    }
}

TEST_CASE("rasterization is idempotent")
{
    const Mesh mesh = build_mesh(16, 16, kSquare, 4, 1);
    PhantomSpec spec;
    spec.inclusions.push_back({Disk{{0.7, 1.1}, 0.4}, 0.25, 6.0});
    const OpticalField a = rasterize_phantom(spec, mesh);
    const OpticalField b = rasterize_phantom(spec, mesh);
    CHECK(a.sigma_a == b.sigma_a);
    CHECK(a.sigma_s == b.sigma_s);
}

TEST_CASE("disk area estimate converges at first order under refinement")
{
    PhantomSpec spec;
    spec.inclusions.push_back({Disk{{1.0, 1.0}, 0.3}, 0.2, 8.0});
    const double exact = std::numbers::pi * 0.09;
    for (std::size_t n : {20u, 40u, 80u, 160u}) {
        const Mesh mesh = build_mesh(n, n, kSquare, 4, 1);
        const double h = mesh.hx;
        // boundary cells of a radius-r disk cover at most 2 pi r * sqrt(2) h
        const double bound = 2.0 * std::numbers::pi * 0.3 * std::sqrt(2.0) * h;
        CHECK(std::abs(disk_area_estimate(mesh, rasterize_phantom(spec, mesh), 0.2) - exact) <= bound);
    }
}

TEST_CASE("optical field validation")
{
    CHECK_NOTHROW(OpticalField::constant(4, 0.1, 8.0).validate(4));
    CHECK_THROWS_AS(OpticalField::constant(4, 0.1, 8.0).validate(5), InvalidArgument);
    CHECK_THROWS_AS(OpticalField::constant(4, 0.0, 8.0).validate(4), InvalidArgument);
    CHECK_THROWS_AS(OpticalField::constant(4, 0.1, -1.0).validate(4), InvalidArgument);
    CHECK_THROWS_AS(OpticalField(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(4)), InvalidArgument);
    CHECK(OpticalField::constant(3, 0.1, 8.0).total().isApproxToConstant(8.1));
}

TEST_CASE("grid CSV round trip is exact and row-major")
{
    testing::TempDir dir("medium");
    const Mesh mesh = build_mesh(5, 3, kSquare, 4, 1);
    const Eigen::VectorXd v = testing::random_vector(15, 11) * 1e3;
    write_grid_csv(dir / "g.csv", v, mesh);
    CHECK(read_grid_csv(dir / "g.csv", mesh) == v);

    std::ostringstream os;
    write_grid_csv(os, Eigen::VectorXd::LinSpaced(15, 0.0, 14.0), mesh);
    CHECK(os.str() == "0,1,2,3,4\n5,6,7,8,9\n10,11,12,13,14\n");

    const Mesh wrong = build_mesh(3, 5, kSquare, 4, 1);
    CHECK_THROWS_AS(read_grid_csv(dir / "g.csv", wrong), InvalidArgument);
}

TEST_CASE("graymap header and scaling")
{
    testing::TempDir dir("pgm");
    const Mesh mesh = build_mesh(2, 2, kSquare, 4, 1);
    Eigen::VectorXd v(4);
    v << 0.0, 1.0, 2.0, 4.0;
    write_pgm(dir / "g.pgm", v, mesh);
    std::ifstream in(dir / "g.pgm", std::ios::binary);
    std::string magic, comment, dims, maxval;
    std::getline(in, magic);
    std::getline(in, comment);
    std::getline(in, dims);
    std::getline(in, maxval);
    CHECK(magic == "P5");
    CHECK(comment == "# rtsom min=0 max=4");
    CHECK(dims == "2 2");
    CHECK(maxval == "255");
    unsigned char px[4];
    in.read(reinterpret_cast<char*>(px), 4);
    // top row first: cells (0,1), (1,1)
    CHECK(px[0] == 128);
    CHECK(px[1] == 255);
    CHECK(px[2] == 0);
    CHECK(px[3] == 64);
}
