#include "stsurro/grid.hpp"

#include <cmath>

#include "stsurro/errors.hpp"
#include "stsurro/util.hpp"

namespace stsurro {

std::string variable_name(Variable v) {
    switch (v) {
        case Variable::mass: return "mass";
        case Variable::x_momentum: return "x_momentum";
        case Variable::y_momentum: return "y_momentum";
    }
    return "mass";
}

Variable variable_from_name(const std::string& name) {
    if (name == "mass") return Variable::mass;
    if (name == "x_momentum" || name == "xmom") return Variable::x_momentum;
    if (name == "y_momentum" || name == "ymom") return Variable::y_momentum;
    throw ConfigError("unknown variable '" + name + "'");
}

std::string outcome_name(Outcome o) {
    switch (o) {
        case Outcome::break_: return "break";
        case Outcome::almost_break: return "almost_break";
        case Outcome::no_break: return "no_break";
        case Outcome::unknown: return "unknown";
    }
    return "unknown";
}

Outcome outcome_from_name(const std::string& name) {
    if (name == "break") return Outcome::break_;
    if (name == "almost_break") return Outcome::almost_break;
    if (name == "no_break") return Outcome::no_break;
    if (name == "unknown") return Outcome::unknown;
    throw ConfigError("unknown outcome '" + name + "'");
}

uint64_t CommonGrid::descriptor_hash() const {
    std::string desc = format_double(x_min) + ";" + format_double(x_max) + ";" +
                       format_double(y_min) + ";" + format_double(y_max) + ";" +
                       format_double(delta) + ";" + std::to_string(nx) + ";" +
                       std::to_string(ny);
    return fnv1a(desc);
}

void CommonGrid::validate() const {
    if (delta <= 0) throw ConfigError("grid delta must be positive");
    if (nx <= 0 || ny <= 0) throw ConfigError("grid dimensions must be positive");
    auto close = [](double a, Index n) { return std::llround(a) == n; };
    if (!close((x_max - x_min) / delta, nx) || !close((y_max - y_min) / delta, ny))
        throw ConfigError("grid bounds, delta, and dimensions disagree");
    if (block_ranges.empty()) throw ConfigError("grid has no block ranges");
    Index expect = 0;
    for (const auto& r : block_ranges) {
        if (r.begin != expect || r.end <= r.begin)
            throw ConfigError("block ranges must be contiguous, ascending, nonempty");
        expect = r.end;
    }
    if (expect != ny) throw ConfigError("block ranges do not cover all grid rows");
}

std::vector<RowRange> make_block_ranges(Index ny, int n_blocks) {
    if (n_blocks < 1) throw ConfigError("block count must be >= 1");
    if (static_cast<Index>(n_blocks) > ny) n_blocks = static_cast<int>(ny);
    std::vector<RowRange> ranges;
    ranges.reserve(n_blocks);
    Index base = ny / n_blocks, rem = ny % n_blocks, at = 0;
    for (int k = 0; k < n_blocks; ++k) {
        Index rows = base + (k < rem ? 1 : 0);
        ranges.push_back({at, at + rows});
        at += rows;
    }
    return ranges;
}

CommonGrid make_grid(double x_min, double x_max, double y_min, double y_max, double delta,
                     int n_blocks) {
    CommonGrid g;
    g.x_min = x_min;
    g.x_max = x_max;
    g.y_min = y_min;
    g.y_max = y_max;
    g.delta = delta;
    g.nx = static_cast<Index>(std::llround((x_max - x_min) / delta));
    g.ny = static_cast<Index>(std::llround((y_max - y_min) / delta));
    g.block_ranges = make_block_ranges(g.ny, n_blocks);
    g.validate();
    return g;
}

}  // namespace stsurro
