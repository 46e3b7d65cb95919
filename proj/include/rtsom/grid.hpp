#pragma once

// Phase-space discretization: a uniform rectangular finite-volume mesh with
// boundary faces, detectors and boundary sources, plus a discrete-ordinates
// direction set carrying the Henyey-Greenstein scattering kernel.

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace rtsom {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline double dot(const Point2& a, const Point2& b) { return a.x * b.x + a.y * b.y; }

struct Rect {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 1.0;
    double y1 = 1.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    double perimeter() const { return 2.0 * (width() + height()); }
};

enum class Side { bottom, right, top, left };

/// One boundary face. Faces are stored counter-clockwise starting at the
/// lower-left corner, so `arc_start` increases with the face index.
struct BoundaryFace {
    std::size_t cell = 0;
    Side side = Side::bottom;
    Point2 normal;
    Point2 midpoint;
    double length = 0.0;
    double arc_start = 0.0;
};

struct Mesh {
    std::size_t nx = 0;
    std::size_t ny = 0;
    Rect domain;
    double hx = 0.0;
    double hy = 0.0;

    std::vector<Point2> cell_centers;   // index m = j * nx + i
    std::vector<double> cell_volumes;
    std::vector<BoundaryFace> boundary_faces;

    std::vector<Point2> detector_positions;
    std::vector<std::size_t> detector_faces;  // boundary face owned by each detector

    /// Boundary intensity per source, one value per boundary face.
    std::vector<std::vector<double>> source_intensity;

    std::size_t num_cells() const { return nx * ny; }
    std::size_t num_detectors() const { return detector_positions.size(); }
    std::size_t num_sources() const { return source_intensity.size(); }

    std::size_t cell_index(std::size_t i, std::size_t j) const { return j * nx + i; }

    /// Index of the boundary face on `side` that belongs to boundary cell (i, j).
    std::size_t boundary_face_index(Side side, std::size_t i, std::size_t j) const;

    /// Faces carrying a nonzero intensity for source q.
    std::vector<std::size_t> source_support(std::size_t q) const;
};

/// Uniform nx-by-ny mesh; detectors at equispaced arc length starting at the
/// lower-left corner, sources as contiguous equal-arc boundary segments with
/// unit intensity.
Mesh build_mesh(std::size_t nx, std::size_t ny, const Rect& domain, std::size_t n_detectors,
                std::size_t n_sources);

struct AngularGrid {
    std::size_t ns = 0;
    double g = 0.0;
    std::vector<Point2> directions;
    std::vector<double> weights;
    /// Row-normalized kernel k_{ll'} with sum_{l'} eta_{l'} k_{ll'} = 1.
    Eigen::MatrixXd kernel;
    /// Kernel with quadrature weights folded in: scatter(l, l') = eta_{l'} k_{ll'}.
    /// This is the matrix that acts on a direction vector of phase values.
    Eigen::MatrixXd scatter;

    /// Directions and weights supplied by the caller, e.g. a single
    /// grid-aligned ordinate. Weights are rescaled to sum to one.
    static AngularGrid from_directions(std::vector<Point2> directions, std::vector<double> weights,
                                       double g);
};

/// Henyey-Greenstein weight (1 - g^2) / (1 + g^2 - 2 g cos)^(d/2) with d = 2,
/// before normalization.
double henyey_greenstein_2d(double g, double cos_angle);

/// Midpoint rule on ns equispaced angles theta_l = 2 pi (l - 1/2) / ns.
AngularGrid build_angular(std::size_t ns, double g);

}  // namespace rtsom
