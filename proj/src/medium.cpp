#include "rtsom/medium.hpp"

#include "rtsom/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace rtsom {

OpticalField::OpticalField(Eigen::VectorXd a, Eigen::VectorXd s) : sigma_a(std::move(a)), sigma_s(std::move(s))
{
    if (sigma_a.size() != sigma_s.size())
        throw InvalidArgument("OpticalField: absorption and scattering sizes differ");
}

OpticalField OpticalField::constant(std::size_t cells, double a, double s)
{
    const auto n = static_cast<Eigen::Index>(cells);
    return {Eigen::VectorXd::Constant(n, a), Eigen::VectorXd::Constant(n, s)};
}

void OpticalField::validate(std::size_t cells) const
{
    const auto n = static_cast<Eigen::Index>(cells);
    if (sigma_a.size() != n || sigma_s.size() != n)
        throw InvalidArgument("OpticalField: expected " + std::to_string(cells) + " cells");
    if (!(sigma_a.array() > 0.0).all() || !(sigma_s.array() > 0.0).all())
        throw InvalidArgument("OpticalField: coefficients must be strictly positive");
}

bool contains(const Shape& shape, const Point2& p)
{
    struct Visitor {
        const Point2& p;
        bool operator()(const Disk& d) const
        {
            const double dx = p.x - d.center.x, dy = p.y - d.center.y;
            return dx * dx + dy * dy <= d.radius * d.radius;
        }
        bool operator()(const AxisRect& r) const
        {
            return p.x >= r.min.x && p.x <= r.max.x && p.y >= r.min.y && p.y <= r.max.y;
        }
        bool operator()(const Polygon& poly) const
        {
            // Even-odd ray casting.
            bool inside = false;
            const auto& v = poly.vertices;
            for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
                if ((v[i].y > p.y) != (v[j].y > p.y) &&
                    p.x < (v[j].x - v[i].x) * (p.y - v[i].y) / (v[j].y - v[i].y) + v[i].x)
                    inside = !inside;
            }
            return inside;
        }
    };
    return std::visit(Visitor{p}, shape);
}

OpticalField rasterize_phantom(const PhantomSpec& spec, const Mesh& mesh)
{
    OpticalField field = OpticalField::constant(mesh.num_cells(), spec.background_a, spec.background_s);
    for (std::size_t m = 0; m < mesh.num_cells(); ++m) {
        const auto idx = static_cast<Eigen::Index>(m);
        for (const auto& inc : spec.inclusions) {
            if (contains(inc.shape, mesh.cell_centers[m])) {
                field.sigma_a[idx] = inc.value_a;
                field.sigma_s[idx] = inc.value_s;
            }
        }
    }
    return field;
}

void write_grid_csv(std::ostream& out, const Eigen::VectorXd& values, const Mesh& mesh)
{
    if (values.size() != static_cast<Eigen::Index>(mesh.num_cells()))
        throw InvalidArgument("write_grid_csv: size does not match mesh");
    out << std::setprecision(17);
    for (std::size_t j = 0; j < mesh.ny; ++j) {
        for (std::size_t i = 0; i < mesh.nx; ++i) {
            if (i) out << ',';
            out << values[static_cast<Eigen::Index>(mesh.cell_index(i, j))];
        }
        out << '\n';
    }
}

void write_grid_csv(const std::string& path, const Eigen::VectorXd& values, const Mesh& mesh)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_grid_csv(out, values, mesh);
}

Eigen::VectorXd read_grid_csv(const std::string& path, const Mesh& mesh)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    Eigen::VectorXd values(static_cast<Eigen::Index>(mesh.num_cells()));
    std::string line;
    std::size_t j = 0;
    while (std::getline(in, line) && j < mesh.ny) {
        std::stringstream row(line);
        std::string cell;
        std::size_t i = 0;
        while (std::getline(row, cell, ',')) {
            if (i >= mesh.nx) throw InvalidArgument(path + ": too many columns");
            values[static_cast<Eigen::Index>(mesh.cell_index(i, j))] = std::stod(cell);
            ++i;
        }
        if (i != mesh.nx) throw InvalidArgument(path + ": expected " + std::to_string(mesh.nx) + " columns");
        ++j;
    }
    if (j != mesh.ny) throw InvalidArgument(path + ": expected " + std::to_string(mesh.ny) + " rows");
    return values;
}

void write_pgm(const std::string& path, const Eigen::VectorXd& values, const Mesh& mesh)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    const double lo = values.minCoeff(), hi = values.maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;
    out << "P5\n# rtsom min=" << std::setprecision(17) << lo << " max=" << hi << '\n'
        << mesh.nx << ' ' << mesh.ny << "\n255\n";
    for (std::size_t jj = mesh.ny; jj-- > 0;) {
        for (std::size_t i = 0; i < mesh.nx; ++i) {
            const double v = values[static_cast<Eigen::Index>(mesh.cell_index(i, jj))];
            const auto level = static_cast<unsigned char>(std::lround(255.0 * (v - lo) / span));
            out.put(static_cast<char>(level));
        }
    }
}

}  // namespace rtsom
