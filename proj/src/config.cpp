#include "rtsom/config.hpp"

#include "rtsom/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace rtsom {

using nlohmann::json;

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t offset)
{
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Walks quoted keys in document order; good enough to point at the key a
// message is about.
std::size_t line_of_path(const std::string& text, const std::vector<std::string>& path)
{
    std::size_t pos = 0;
    for (const auto& key : path) {
        const auto hit = text.find('"' + key + '"', pos);
        if (hit == std::string::npos) break;
        pos = hit + 1;
    }
    return pos ? line_of_offset(text, pos - 1) : 1;
}

std::string dotted(const std::vector<std::string>& path)
{
    std::string s;
    for (const auto& p : path) s += (s.empty() ? "" : ".") + p;
    return s.empty() ? "<root>" : s;
}

class Section {
public:
    Section(const std::string& text, const json& node, std::vector<std::string> path, std::set<std::string> allowed)
        : text_(text), node_(node), path_(std::move(path))
    {
        if (!node_.is_object()) fail("'" + dotted(path_) + "' must be an object");
        for (const auto& [key, value] : node_.items()) {
            (void)value;
            if (!allowed.count(key)) {
                auto p = path_;
                p.push_back(key);
                throw ConfigError("unknown key '" + dotted(p) + "'", line_of_path(text_, p));
            }
        }
    }

    bool has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

    const json& require(const std::string& key) const
    {
        if (!has(key))
            throw ConfigError("missing required key '" + dotted(child_path(key)) + "'", line_of_path(text_, path_));
        return node_.at(key);
    }

    Section section(const std::string& key, std::set<std::string> allowed) const
    {
        return {text_, require(key), child_path(key), std::move(allowed)};
    }

    double number(const std::string& key, std::optional<double> fallback = {}) const
    {
        if (!has(key)) {
            if (fallback) return *fallback;
            require(key);
        }
        const json& v = node_.at(key);
        if (!v.is_number()) fail_at(key, "must be a number");
        return v.get<double>();
    }

    std::size_t count(const std::string& key, std::optional<std::size_t> fallback = {}, std::size_t min = 1) const
    {
        if (!has(key)) {
            if (fallback) return *fallback;
            require(key);
        }
        const json& v = node_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min))
            fail_at(key, "must be an integer >= " + std::to_string(min));
        return v.get<std::size_t>();
    }

    std::string string(const std::string& key, std::optional<std::string> fallback = {}) const
    {
        if (!has(key)) {
            if (fallback) return *fallback;
            require(key);
        }
        const json& v = node_.at(key);
        if (!v.is_string()) fail_at(key, "must be a string");
        return v.get<std::string>();
    }

    Point2 point(const std::string& key) const
    {
        const json& v = require(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            fail_at(key, "must be a pair [x, y]");
        return {v[0].get<double>(), v[1].get<double>()};
    }

    [[noreturn]] void fail(const std::string& what) const { throw ConfigError(what, line_of_path(text_, path_)); }

    [[noreturn]] void fail_at(const std::string& key, const std::string& what) const
    {
        const auto p = child_path(key);
        throw ConfigError("'" + dotted(p) + "' " + what, line_of_path(text_, p));
    }

    const json& node() const { return node_; }
    const std::vector<std::string>& path() const { return path_; }

private:
    std::vector<std::string> child_path(const std::string& key) const
    {
        auto p = path_;
        p.push_back(key);
        return p;
    }

    const std::string& text_;
    const json& node_;
    std::vector<std::string> path_;
};

Inclusion parse_inclusion(const std::string& text, const json& node, std::vector<std::string> path,
                          const PhantomSpec& background)
{
    const Section s(text, node, std::move(path), {"shape", "center", "radius", "min", "max", "vertices", "sigma_a", "sigma_s"});
    Inclusion inc;
    inc.value_a = s.number("sigma_a", background.background_a);
    inc.value_s = s.number("sigma_s", background.background_s);
    if (!(inc.value_a > 0.0) || !(inc.value_s > 0.0)) s.fail("inclusion coefficients must be positive");
    const std::string shape = s.string("shape");
    if (shape == "disk") {
        const double r = s.number("radius");
        if (!(r > 0.0)) s.fail_at("radius", "must be positive");
        inc.shape = Disk{s.point("center"), r};
    } else if (shape == "rect") {
        inc.shape = AxisRect{s.point("min"), s.point("max")};
    } else if (shape == "polygon") {
        const json& v = s.require("vertices");
        if (!v.is_array() || v.size() < 3) s.fail_at("vertices", "must list at least three [x, y] points");
        Polygon poly;
        for (const auto& p : v) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
                s.fail_at("vertices", "entries must be [x, y] pairs");
            poly.vertices.push_back({p[0].get<double>(), p[1].get<double>()});
        }
        inc.shape = std::move(poly);
    } else {
        s.fail_at("shape", "must be one of disk, rect, polygon (got '" + shape + "')");
    }
    return inc;
}

LPolicy parse_policy(const Section& svd)
{
    if (!svd.has("L")) return LPolicy::fixed(50);
    const json& node = svd.node().at("L");
    if (node.is_number_integer()) {
        if (node.get<long long>() < 1) svd.fail_at("L", "must be >= 1");
        return LPolicy::fixed(node.get<std::size_t>());
    }
    const Section l = svd.section("L", {"policy", "value", "factor", "plateau"});
    const std::string policy = l.string("policy");
    if (policy == "fixed") return LPolicy::fixed(l.count("value"));
    if (policy == "jump") {
        const double f = l.number("factor", 10.0);
        if (!(f > 1.0)) l.fail_at("factor", "must exceed 1");
        return LPolicy::jump(f);
    }
    if (policy == "projection") {
        const double p = l.number("plateau", 0.5);
        if (!(p > 0.0 && p < 1.0)) l.fail_at("plateau", "must lie in (0, 1)");
        return LPolicy::projection(p);
    }
    l.fail_at("policy", "must be fixed, jump or projection (got '" + policy + "')");
}

}  // namespace

RunConfig parse_config(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what(), line_of_offset(text, e.byte ? e.byte - 1 : 0));
    }

    RunConfig cfg;
    cfg.source_text = text;
    const Section root(text, doc, {},
                       {"name", "mesh", "angular", "sources", "detectors", "phantom", "mode", "svd", "recon", "noise",
                        "output"});
    ExperimentSpec& ex = cfg.experiment;

    const Section mesh = root.section("mesh", {"nx", "ny", "domain", "forward_factor"});
    ex.nx = mesh.count("nx", {}, 2);
    ex.ny = mesh.count("ny", {}, 2);
    ex.forward_factor = mesh.count("forward_factor", 2, 2);
    if (mesh.has("domain")) {
        const json& d = mesh.node().at("domain");
        if (!d.is_array() || d.size() != 4 || !std::all_of(d.begin(), d.end(), [](const json& x) { return x.is_number(); }))
            mesh.fail_at("domain", "must be [x0, y0, x1, y1]");
        ex.domain = {d[0].get<double>(), d[1].get<double>(), d[2].get<double>(), d[3].get<double>()};
        if (!(ex.domain.x1 > ex.domain.x0 && ex.domain.y1 > ex.domain.y0)) mesh.fail_at("domain", "is empty");
    }

    const Section ang = root.section("angular", {"ns", "g", "forward_ns"});
    ex.ns = ang.count("ns", {}, 4);
    ex.g = ang.number("g", 0.0);
    if (!(std::abs(ex.g) < 1.0)) ang.fail_at("g", "must satisfy |g| < 1");
    ex.forward_ns = ang.count("forward_ns", 2 * ex.ns, 4);
    if (ex.ns % 2 || ex.forward_ns % 2) ang.fail("direction counts must be even");

    ex.sources = root.section("sources", {"count"}).count("count");
    ex.detectors = root.section("detectors", {"count"}).count("count");

    const Section ph = root.section("phantom", {"background", "inclusions"});
    if (ph.has("background")) {
        const Section bg = ph.section("background", {"sigma_a", "sigma_s"});
        ex.phantom.background_a = bg.number("sigma_a", 0.1);
        ex.phantom.background_s = bg.number("sigma_s", 8.0);
        if (!(ex.phantom.background_a > 0.0) || !(ex.phantom.background_s > 0.0))
            bg.fail("background coefficients must be positive");
    }
    if (ph.has("inclusions")) {
        const json& list = ph.node().at("inclusions");
        if (!list.is_array()) ph.fail_at("inclusions", "must be an array");
        for (std::size_t i = 0; i < list.size(); ++i)
            ex.phantom.inclusions.push_back(
                parse_inclusion(text, list[i], {"phantom", "inclusions"}, ex.phantom));
    }

    const std::string mode = root.string("mode");
    if (mode == "absorption") ex.mode = Mode::absorption;
    else if (mode == "scattering") ex.mode = Mode::scattering;
    else root.fail_at("mode", "must be absorption or scattering (got '" + mode + "')");

    if (root.has("svd")) {
        const Section svd = root.section("svd", {"cache", "L"});
        cfg.cache_path = svd.string("cache", "");
        cfg.recon.truncation = parse_policy(svd);
    }

    cfg.recon.initial_value = ex.mode == Mode::absorption ? ex.phantom.background_a : ex.phantom.background_s;
    if (root.has("recon")) {
        const Section r = root.section("recon", {"algorithm", "max_iterations", "gradient_tolerance", "line_search",
                                                  "stall_window", "stall_tolerance", "positivity_floor",
                                                  "initial_value", "init_from"});
        const std::string alg = r.string("algorithm", "two_step");
        try {
            cfg.recon.algorithm = parse_algorithm(alg);
        } catch (const InvalidArgument&) {
            r.fail_at("algorithm", "must be two_step, modified_two_step or one_step (got '" + alg + "')");
        }
        auto& b = cfg.recon.bfgs;
        b.max_iterations = static_cast<int>(r.count("max_iterations", 50));
        b.gradient_tolerance = r.number("gradient_tolerance", 1e-8);
        if (!(b.gradient_tolerance > 0.0)) r.fail_at("gradient_tolerance", "must be positive");
        b.stall_window = static_cast<int>(r.count("stall_window", 3, 0));
        b.stall_tolerance = r.number("stall_tolerance", 1e-4);
        if (b.stall_tolerance < 0.0) r.fail_at("stall_tolerance", "must be >= 0");
        if (r.has("positivity_floor")) {
            const double f = r.number("positivity_floor");
            if (!(f > 0.0)) r.fail_at("positivity_floor", "must be positive");
            b.positivity_floor = f;
        }
        if (r.has("line_search")) {
            const Section ls = r.section("line_search", {"sufficient_decrease", "backtrack", "max_backtracks"});
            b.line_search.sufficient_decrease = ls.number("sufficient_decrease", 1e-4);
            b.line_search.backtrack = ls.number("backtrack", 0.5);
            b.line_search.max_backtracks = static_cast<int>(ls.count("max_backtracks", 60));
            if (!(b.line_search.sufficient_decrease > 0.0 && b.line_search.sufficient_decrease < 1.0))
                ls.fail_at("sufficient_decrease", "must lie in (0, 1)");
            if (!(b.line_search.backtrack > 0.0 && b.line_search.backtrack < 1.0))
                ls.fail_at("backtrack", "must lie in (0, 1)");
        }
        cfg.recon.initial_value = r.number("initial_value", cfg.recon.initial_value);
        cfg.init_from = r.string("init_from", "");
    }

    if (root.has("noise")) {
        const Section n = root.section("noise", {"levels", "seed"});
        if (n.has("levels")) {
            const json& lv = n.node().at("levels");
            if (!lv.is_array() || lv.empty()) n.fail_at("levels", "must be a non-empty array of percentages");
            ex.noise_levels.clear();
            for (const auto& v : lv) {
                if (!v.is_number() || v.get<double>() < 0.0) n.fail_at("levels", "entries must be numbers >= 0");
                ex.noise_levels.push_back(v.get<double>());
            }
        }
        if (n.has("seed")) {
            const json& s = n.node().at("seed");
            if (!s.is_number_unsigned()) n.fail_at("seed", "must be a non-negative integer");
            ex.seed = s.get<std::uint64_t>();
        }
    }

    ex.name = root.string("name", "run");
    if (root.has("output")) {
        const Section o = root.section("output", {"directory", "name"});
        cfg.output_dir = o.string("directory", cfg.output_dir);
        ex.name = o.string("name", ex.name);
    }
    if (ex.name.empty() || ex.name.find_first_of("/\\") != std::string::npos)
        root.fail_at("name", "must be a non-empty plain file name");

    try {
        ex.validate();
        cfg.recon.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what(), 0);
    }
    return cfg;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path, 0);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(e.message(), e.line(), path);
    }
}

}  // namespace rtsom
