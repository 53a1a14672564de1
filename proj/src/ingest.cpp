#include "stsurro/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stsurro/errors.hpp"
#include "stsurro/util.hpp"

namespace stsurro {

EnsembleManifest read_members_manifest(const std::filesystem::path& raw_dir) {
    auto path = raw_dir / "members.tsv";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    EnsembleManifest out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            // Comment key-values carry the timestep rule.
            std::istringstream is(line.substr(1));
            std::string key, eq, value;
            if (is >> key >> eq >> value && eq == "=") {
                if (key == "rule.divisor") out.rule.divisor = parse_double(value);
                if (key == "rule.base") out.rule.base = std::stoi(value);
            }
            continue;
        }
        std::istringstream is(line);
        SimulationMeta m;
        std::string h, v, r, outcome;
        if (!(is >> m.key >> h >> v >> r >> m.n_timesteps >> outcome))
            throw IoError("bad members.tsv line '" + line + "'");
        m.he_length = parse_double(h);
        m.tip_velocity = parse_double(v);
        m.radius = parse_double(r);
        m.outcome = outcome_from_name(outcome);
        out.members.push_back(std::move(m));
    }
    if (out.members.empty()) throw IoError("members.tsv lists no simulations");
    return out;
}

std::vector<std::filesystem::path> raw_table_files(const std::filesystem::path& member_dir,
                                                   int timestep) {
    char stem[16];
    std::snprintf(stem, sizeof(stem), "t%04d", timestep);
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(member_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (name.rfind(stem, 0) != 0) continue;
        std::string rest = name.substr(5);
        if (rest == ".tsv" || (rest.size() > 5 && rest[0] == '_' &&
                               rest.substr(rest.size() - 4) == ".tsv"))
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw IoError("no tables for timestep " + std::to_string(timestep) + " in " +
                      member_dir.string());
    return files;
}

std::vector<RawTableRow> read_raw_tables(const std::vector<std::filesystem::path>& files) {
    std::vector<RawTableRow> rows;
    for (const auto& file : files) {
        std::ifstream in(file);
        if (!in) throw IoError("cannot open " + file.string());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            RawTableRow row;
            double* fields[5] = {&row.x, &row.y, &row.mass, &row.xmom, &row.ymom};
            const char* p = line.data();
            const char* end = line.data() + line.size();
            for (int f = 0; f < 5; ++f) {
                while (p < end && (*p == ' ' || *p == '\t')) ++p;
                auto [next, ec] = std::from_chars(p, end, *fields[f]);
                if (ec != std::errc())
                    throw IoError("bad table line in " + file.string() + ": '" + line + "'");
                p = next;
            }
            rows.push_back(row);
        }
    }
    if (rows.empty()) throw EmptyFieldError("raw tables contain no points");
    return rows;
}

RawField field_from_table(const std::vector<RawTableRow>& rows, Variable variable,
                          const std::string& sim_key, int timestep) {
    RawField field;
    field.variable = variable;
    field.sim_key = sim_key;
    field.timestep = timestep;
    field.points.reserve(rows.size());
    for (const auto& r : rows) {
        double v = variable == Variable::mass ? r.mass
                   : variable == Variable::x_momentum ? r.xmom
                                                      : r.ymom;
        field.points.push_back({r.x, r.y, v});
    }
    return field;
}

}  // namespace stsurro
