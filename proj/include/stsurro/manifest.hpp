#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "stsurro/grid.hpp"
#include "stsurro/snapshot_store.hpp"

namespace stsurro {

// Flat "key = value" text manifests; '#' starts a comment line.
std::map<std::string, std::string> read_manifest(const std::filesystem::path& path);

void write_grid_geometry(std::ostream& os, const CommonGrid& g);
void write_block_ranges(std::ostream& os, const CommonGrid& g);
void write_columns(std::ostream& os, const std::vector<ColumnDescriptor>& cols);

CommonGrid grid_from_manifest(const std::map<std::string, std::string>& kv);
std::vector<RowRange> block_ranges_from_manifest(const std::map<std::string, std::string>& kv);
std::vector<ColumnDescriptor> columns_from_manifest(const std::map<std::string, std::string>& kv);

}  // namespace stsurro
