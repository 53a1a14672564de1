#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stsurro/grid.hpp"

namespace stsurro {

struct RawTableRow {
    double x = 0, y = 0, mass = 0, xmom = 0, ymom = 0;
};

struct EnsembleManifest {
    std::vector<SimulationMeta> members;
    TimestepRule rule;
};

// members.tsv: one member per line (key, h, v, r, n_timesteps, outcome),
// '#' comments; the timestep rule rides along in comment key-values.
EnsembleManifest read_members_manifest(const std::filesystem::path& raw_dir);

// All table files for one (member, timestep): t####.tsv plus any t####_*.tsv
// sub-domain parts, sorted by name. Multi-file layouts are concatenated
// before alignment.
std::vector<std::filesystem::path> raw_table_files(const std::filesystem::path& member_dir,
                                                   int timestep);

std::vector<RawTableRow> read_raw_tables(const std::vector<std::filesystem::path>& files);

RawField field_from_table(const std::vector<RawTableRow>& rows, Variable variable,
                          const std::string& sim_key, int timestep);

}  // namespace stsurro
