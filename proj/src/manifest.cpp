#include "stsurro/manifest.hpp"

#include <fstream>
#include <sstream>

#include "stsurro/errors.hpp"
#include "stsurro/util.hpp"

namespace stsurro {

std::map<std::string, std::string> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("bad manifest line '" + line + "'");
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t");
            size_t b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

void write_grid_geometry(std::ostream& os, const CommonGrid& g) {
    os << "grid.x_min = " << format_double(g.x_min) << "\n";
    os << "grid.x_max = " << format_double(g.x_max) << "\n";
    os << "grid.y_min = " << format_double(g.y_min) << "\n";
    os << "grid.y_max = " << format_double(g.y_max) << "\n";
    os << "grid.delta = " << format_double(g.delta) << "\n";
    os << "grid.nx = " << g.nx << "\n";
    os << "grid.ny = " << g.ny << "\n";
    os << "grid.hash = " << to_hex(g.descriptor_hash()) << "\n";
}

void write_block_ranges(std::ostream& os, const CommonGrid& g) {
    os << "n_blocks = " << g.n_blocks() << "\n";
    for (int k = 0; k < g.n_blocks(); ++k) {
        os << "block." << k << ".y_begin = " << g.block_ranges[k].begin << "\n";
        os << "block." << k << ".y_end = " << g.block_ranges[k].end << "\n";
    }
}

void write_columns(std::ostream& os, const std::vector<ColumnDescriptor>& cols) {
    os << "n_columns = " << cols.size() << "\n";
    for (size_t j = 0; j < cols.size(); ++j) {
        const auto& c = cols[j];
        os << "column." << j << " = " << c.sim_key << " " << c.timestep << " "
           << format_double(c.he_length) << " " << format_double(c.tip_velocity) << " "
           << format_double(c.radius) << " " << format_double(c.time) << "\n";
    }
}

CommonGrid grid_from_manifest(const std::map<std::string, std::string>& kv) {
    CommonGrid g;
    auto need = [&](const std::string& k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw IoError("manifest missing key " + k);
        return it->second;
    };
    g.x_min = parse_double(need("grid.x_min"));
    g.x_max = parse_double(need("grid.x_max"));
    g.y_min = parse_double(need("grid.y_min"));
    g.y_max = parse_double(need("grid.y_max"));
    g.delta = parse_double(need("grid.delta"));
    g.nx = std::stoll(need("grid.nx"));
    g.ny = std::stoll(need("grid.ny"));
    return g;
}

std::vector<RowRange> block_ranges_from_manifest(const std::map<std::string, std::string>& kv) {
    int n_blocks = std::stoi(kv.at("n_blocks"));
    std::vector<RowRange> out;
    for (int k = 0; k < n_blocks; ++k) {
        std::string pfx = "block." + std::to_string(k) + ".";
        out.push_back({std::stoll(kv.at(pfx + "y_begin")), std::stoll(kv.at(pfx + "y_end"))});
    }
    return out;
}

std::vector<ColumnDescriptor> columns_from_manifest(const std::map<std::string, std::string>& kv) {
    size_t n_cols = std::stoull(kv.at("n_columns"));
    std::vector<ColumnDescriptor> out;
    out.reserve(n_cols);
    for (size_t j = 0; j < n_cols; ++j) {
        std::istringstream is(kv.at("column." + std::to_string(j)));
        ColumnDescriptor c;
        std::string h, v, r, t;
        is >> c.sim_key >> c.timestep >> h >> v >> r >> t;
        if (!is) throw IoError("bad column descriptor " + std::to_string(j));
        c.he_length = parse_double(h);
        c.tip_velocity = parse_double(v);
        c.radius = parse_double(r);
        c.time = parse_double(t);
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace stsurro
