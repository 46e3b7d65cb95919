#include "rtsom/grid.hpp"

#include "rtsom/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace rtsom {

std::size_t Mesh::boundary_face_index(Side side, std::size_t i, std::size_t j) const
{
    switch (side) {
    case Side::bottom:
        return i;
    case Side::right:
        return nx + j;
    case Side::top:
        return nx + ny + (nx - 1 - i);
    case Side::left:
        return 2 * nx + ny + (ny - 1 - j);
    }
    return 0;
}

std::vector<std::size_t> Mesh::source_support(std::size_t q) const
{
    std::vector<std::size_t> faces;
    const auto& f = source_intensity.at(q);
    for (std::size_t b = 0; b < f.size(); ++b)
        if (f[b] != 0.0) faces.push_back(b);
    return faces;
}

namespace {

// Point on the boundary at arc length s (counter-clockwise from (x0, y0)).
Point2 boundary_point(const Rect& r, double s)
{
    const double w = r.width(), h = r.height();
    s = std::fmod(s, r.perimeter());
    if (s < w) return {r.x0 + s, r.y0};
    s -= w;
    if (s < h) return {r.x1, r.y0 + s};
    s -= h;
    if (s < w) return {r.x1 - s, r.y1};
    s -= w;
    return {r.x0, r.y1 - s};
}

}  // namespace

Mesh build_mesh(std::size_t nx, std::size_t ny, const Rect& domain, std::size_t n_detectors,
                std::size_t n_sources)
{
    if (nx < 2 || ny < 2) throw InvalidArgument("build_mesh: nx and ny must be at least 2");
    if (n_detectors < 1 || n_sources < 1)
        throw InvalidArgument("build_mesh: need at least one detector and one source");
    if (!(domain.width() > 0.0) || !(domain.height() > 0.0))
        throw InvalidArgument("build_mesh: domain must have positive width and height");

    Mesh mesh;
    mesh.nx = nx;
    mesh.ny = ny;
    mesh.domain = domain;
    mesh.hx = domain.width() / static_cast<double>(nx);
    mesh.hy = domain.height() / static_cast<double>(ny);

    const std::size_t n = nx * ny;
    mesh.cell_centers.resize(n);
    mesh.cell_volumes.assign(n, mesh.hx * mesh.hy);
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i)
            mesh.cell_centers[mesh.cell_index(i, j)] = {domain.x0 + (i + 0.5) * mesh.hx,
                                                        domain.y0 + (j + 0.5) * mesh.hy};

    // Counter-clockwise boundary walk from the lower-left corner.
    const std::size_t nb = 2 * (nx + ny);
    mesh.boundary_faces.resize(nb);
    double arc = 0.0;
    auto push = [&](std::size_t b, std::size_t cell, Side side, Point2 normal, double len) {
        BoundaryFace& f = mesh.boundary_faces[b];
        f.cell = cell;
        f.side = side;
        f.normal = normal;
        f.length = len;
        f.arc_start = arc;
        f.midpoint = boundary_point(domain, arc + 0.5 * len);
        arc += len;
    };
    for (std::size_t i = 0; i < nx; ++i)
        push(mesh.boundary_face_index(Side::bottom, i, 0), mesh.cell_index(i, 0), Side::bottom,
             {0.0, -1.0}, mesh.hx);
    for (std::size_t j = 0; j < ny; ++j)
        push(mesh.boundary_face_index(Side::right, nx - 1, j), mesh.cell_index(nx - 1, j),
             Side::right, {1.0, 0.0}, mesh.hy);
    for (std::size_t i = nx; i-- > 0;)
        push(mesh.boundary_face_index(Side::top, i, ny - 1), mesh.cell_index(i, ny - 1), Side::top,
             {0.0, 1.0}, mesh.hx);
    for (std::size_t j = ny; j-- > 0;)
        push(mesh.boundary_face_index(Side::left, 0, j), mesh.cell_index(0, j), Side::left,
             {-1.0, 0.0}, mesh.hy);

    // Face b owns the half-open arc interval [arc_start, arc_start + length).
    auto face_at_arc = [&](double s) {
        std::size_t lo = 0, hi = nb;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            if (mesh.boundary_faces[mid].arc_start <= s)
                lo = mid;
            else
                hi = mid;
        }
        return lo;
    };

    const double perimeter = domain.perimeter();
    mesh.detector_positions.resize(n_detectors);
    mesh.detector_faces.resize(n_detectors);
    for (std::size_t d = 0; d < n_detectors; ++d) {
        const double s = perimeter * static_cast<double>(d) / static_cast<double>(n_detectors);
        mesh.detector_positions[d] = boundary_point(domain, s);
        mesh.detector_faces[d] = face_at_arc(s);
    }

    mesh.source_intensity.assign(n_sources, std::vector<double>(nb, 0.0));
    const double seg = perimeter / static_cast<double>(n_sources);
    for (std::size_t b = 0; b < nb; ++b) {
        const double mid = mesh.boundary_faces[b].arc_start + 0.5 * mesh.boundary_faces[b].length;
        auto q = static_cast<std::size_t>(std::floor(mid / seg));
        if (q >= n_sources) q = n_sources - 1;
        mesh.source_intensity[q][b] = 1.0;
    }
    return mesh;
}

double henyey_greenstein_2d(double g, double cos_angle)
{
    return (1.0 - g * g) / (1.0 + g * g - 2.0 * g * cos_angle);
}

namespace {

void fill_kernel(AngularGrid& grid)
{
    const std::size_t ns = grid.ns;
    grid.kernel.resize(ns, ns);
    for (std::size_t l = 0; l < ns; ++l)
        for (std::size_t lp = 0; lp < ns; ++lp)
            grid.kernel(l, lp) =
                henyey_greenstein_2d(grid.g, dot(grid.directions[l], grid.directions[lp]));
    for (std::size_t l = 0; l < ns; ++l) {
        double row = 0.0;
        for (std::size_t lp = 0; lp < ns; ++lp) row += grid.weights[lp] * grid.kernel(l, lp);
        grid.kernel.row(l) /= row;
    }
    grid.scatter = grid.kernel;
    for (std::size_t lp = 0; lp < ns; ++lp) grid.scatter.col(lp) *= grid.weights[lp];
}

}  // namespace

AngularGrid AngularGrid::from_directions(std::vector<Point2> directions, std::vector<double> weights,
                                         double g)
{
    if (directions.empty() || directions.size() != weights.size())
        throw InvalidArgument("AngularGrid: need matching, nonempty directions and weights");
    if (!(std::abs(g) < 1.0)) throw InvalidArgument("AngularGrid: |g| must be below 1");
    double total = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw InvalidArgument("AngularGrid: weights must be positive");
        total += w;
    }
    AngularGrid grid;
    grid.ns = directions.size();
    grid.g = g;
    grid.directions = std::move(directions);
    for (auto& v : grid.directions) {
        const double len = std::hypot(v.x, v.y);
        if (!(len > 0.0)) throw InvalidArgument("AngularGrid: zero direction");
        v = {v.x / len, v.y / len};
    }
    grid.weights = std::move(weights);
    for (double& w : grid.weights) w /= total;
    fill_kernel(grid);
    return grid;
}

AngularGrid build_angular(std::size_t ns, double g)
{
    if (ns < 4 || ns % 2 != 0)
        throw InvalidArgument("build_angular: ns must be even and at least 4, got " +
                              std::to_string(ns));
    if (!(std::abs(g) < 1.0)) throw InvalidArgument("build_angular: |g| must be below 1");

    AngularGrid grid;
    grid.ns = ns;
    grid.g = g;
    grid.directions.resize(ns);
    grid.weights.assign(ns, 1.0 / static_cast<double>(ns));
    // Absorb the rounding of 1/ns into the last weight so the sequential sum is exactly one.
    double head = 0.0;
    for (std::size_t l = 0; l + 1 < ns; ++l) head += grid.weights[l];
    grid.weights[ns - 1] = 1.0 - head;
    for (std::size_t l = 0; l < ns; ++l) {
        const double theta = 2.0 * std::numbers::pi * (static_cast<double>(l) + 0.5) /
                             static_cast<double>(ns);
        grid.directions[l] = {std::cos(theta), std::sin(theta)};
    }
    // Equispaced ordinates make the kernel circulant in l' - l. Filling it from
    // one profile keeps K exactly symmetric and exactly rotation invariant.
    std::vector<double> profile(ns / 2 + 1);
    for (std::size_t d = 0; d <= ns / 2; ++d)
        profile[d] = henyey_greenstein_2d(g, std::cos(2.0 * std::numbers::pi * static_cast<double>(d) /
                                                      static_cast<double>(ns)));
    double row = 0.0;
    for (std::size_t d = 0; d < ns; ++d) row += profile[std::min(d, ns - d)] / static_cast<double>(ns);
    grid.kernel.resize(ns, ns);
    for (std::size_t l = 0; l < ns; ++l)
        for (std::size_t lp = 0; lp < ns; ++lp) {
            const std::size_t d = l > lp ? l - lp : lp - l;
            grid.kernel(l, lp) = profile[std::min(d, ns - d)] / row;
        }
    grid.scatter = grid.kernel;
    for (std::size_t lp = 0; lp < ns; ++lp) grid.scatter.col(lp) *= grid.weights[lp];
    return grid;
}

}  // namespace rtsom
