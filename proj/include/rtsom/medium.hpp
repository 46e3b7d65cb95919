#pragma once

#include "rtsom/grid.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace rtsom {

/// Per-cell absorption and scattering coefficients on a mesh.
struct OpticalField {
    Eigen::VectorXd sigma_a;
    Eigen::VectorXd sigma_s;

    OpticalField() = default;
    OpticalField(Eigen::VectorXd a, Eigen::VectorXd s);

    static OpticalField constant(std::size_t cells, double a, double s);

    std::size_t size() const { return static_cast<std::size_t>(sigma_a.size()); }
    Eigen::VectorXd total() const { return sigma_a + sigma_s; }

    /// Throws InvalidArgument unless both fields have `cells` strictly positive entries.
    void validate(std::size_t cells) const;
};

struct Disk {
    Point2 center;
    double radius = 0.0;
};

struct AxisRect {
    Point2 min;
    Point2 max;
};

struct Polygon {
    std::vector<Point2> vertices;
};

using Shape = std::variant<Disk, AxisRect, Polygon>;

bool contains(const Shape& shape, const Point2& p);

struct Inclusion {
    Shape shape;
    double value_a = 0.0;
    double value_s = 0.0;
};

struct PhantomSpec {
    double background_a = 0.1;
    double background_s = 8.0;
    std::vector<Inclusion> inclusions;
};

/// Cell-center membership; later inclusions override earlier ones.
OpticalField rasterize_phantom(const PhantomSpec& spec, const Mesh& mesh);

/// Row-major grid (one line per mesh row j, cells i along the line), 17 significant digits.
void write_grid_csv(std::ostream& out, const Eigen::VectorXd& values, const Mesh& mesh);
void write_grid_csv(const std::string& path, const Eigen::VectorXd& values, const Mesh& mesh);
Eigen::VectorXd read_grid_csv(const std::string& path, const Mesh& mesh);

/// Binary PGM (P5), min-max scaled to 0..255, top image row = largest y.
/// The header carries a comment line "# rtsom min=<v> max=<v>".
void write_pgm(const std::string& path, const Eigen::VectorXd& values, const Mesh& mesh);

}  // namespace rtsom
