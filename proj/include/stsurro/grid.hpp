#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace stsurro {

using Eigen::Index;

enum class Variable { mass, x_momentum, y_momentum };

std::string variable_name(Variable v);
Variable variable_from_name(const std::string& name);

enum class Outcome { break_, almost_break, no_break, unknown };

std::string outcome_name(Outcome o);
Outcome outcome_from_name(const std::string& name);

struct SimulationMeta {
    std::string key;
    double radius = 0;        // cm
    double he_length = 0;     // cm
    double tip_velocity = 0;  // cm/us
    int n_timesteps = 0;
    Outcome outcome = Outcome::unknown;
};

// Simulations run for floor(he_length / tip_velocity) + 23 steps: the jet
// needs the first term to get partway through the HE, and 23 us later the
// plate's fate is settled. Synthetic ensembles use a scaled-down analogue
// (divisor > 1, smaller base) to keep desk-scale runs fast.
struct TimestepRule {
    double divisor = 1.0;
    int base = 23;

    int n_steps(double he_length, double tip_velocity) const {
        return static_cast<int>(he_length / (tip_velocity * divisor)) + base;
    }
};

inline int n_timesteps(double he_length, double tip_velocity) {
    return TimestepRule{}.n_steps(he_length, tip_velocity);
}

struct RawPoint {
    double x = 0;
    double y = 0;
    double value = 0;
};

struct RawField {
    std::vector<RawPoint> points;
    Variable variable = Variable::mass;
    std::string sim_key;
    int timestep = 0;
};

// Half-open index range [begin, end) of grid rows (y direction).
struct RowRange {
    Index begin = 0;
    Index end = 0;
    Index count() const { return end - begin; }
};

// The shared regular cell-centered grid all snapshots are remapped onto.
// Samples live at (x_min + (i+1/2)*delta, y_min + (j+1/2)*delta) and a
// flattened snapshot stores them in natural order: ascending y, then
// ascending x within a row.
struct CommonGrid {
    double x_min = 0, x_max = 0;
    double y_min = 0, y_max = 0;
    double delta = 0;
    Index nx = 0, ny = 0;
    std::vector<RowRange> block_ranges;  // partition of [0, ny)

    Index size() const { return nx * ny; }
    int n_blocks() const { return static_cast<int>(block_ranges.size()); }
    double cell_x(Index i) const { return x_min + (static_cast<double>(i) + 0.5) * delta; }
    double cell_y(Index j) const { return y_min + (static_cast<double>(j) + 0.5) * delta; }
    Index natural_index(Index ix, Index iy) const { return iy * nx + ix; }

    // First flattened row index of block k, and the block's row count.
    Index block_offset(int k) const { return block_ranges[k].begin * nx; }
    Index block_rows(int k) const { return block_ranges[k].count() * nx; }

    // Hash of the geometric descriptor (bounds, spacing, dimensions); block
    // structure intentionally excluded so re-blocked stores stay compatible.
    uint64_t descriptor_hash() const;

    void validate() const;  // throws ConfigError on inconsistency
};

// Builds a grid with nx, ny derived from bounds/delta and K near-even blocks.
CommonGrid make_grid(double x_min, double x_max, double y_min, double y_max, double delta,
                     int n_blocks);

std::vector<RowRange> make_block_ranges(Index ny, int n_blocks);

}  // namespace stsurro
