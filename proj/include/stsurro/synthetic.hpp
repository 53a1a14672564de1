#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "stsurro/grid.hpp"
#include "stsurro/sampling.hpp"

namespace stsurro {

// Desk-scale analytic "jet/plate" ensembles standing in for the real
// simulation data: a vertical high-value slab whose right edge drifts and
// whose bottom detaches once the jet has made enough progress, a thin jet
// strip advancing at the tip velocity, and a smooth background. Everything
// is a closed-form function of (h, v, r, t), so ground truth is always
// available independently of any surrogate.
struct SyntheticSpec {
    CommonGrid grid;              // defaults to 128 x 64, x in [-32,0], y in [0,16]
    TimestepRule rule{3.0, 8};    // scaled-down analogue of the production rule
    InputBox box;

    double plate_thickness = 1.0;
    double plate_x0 = -13.0;      // right edge of the plate at t = 0, aligned frame
    double plate_height = 10.0;
    double plate_speed = 3.0;     // edge drift per unit progress p = v t / h
    double break_threshold = 1.0; // bottom detaches once p exceeds this
    double almost_margin = 0.06;
    double detach_gain = 6.0;
    double ramp_width = 0.5;      // edge softening, in cm
    double jet_value = 8.0;
    double plate_value = 8.0;
    double background = 1.0;
    double noise = 0.0;
    uint64_t seed = 0;

    std::vector<SimulationMeta> members;  // n_timesteps filled from rule
};

SyntheticSpec default_synthetic_spec();

// Jet progress p = v t / h; the recipe's break predicate is p(t_last) >
// break_threshold, evaluated in closed form.
double synthetic_progress(double h, double v, double t);
bool synthetic_breaks(const SyntheticSpec& spec, double h, double v);
Outcome synthetic_outcome(const SyntheticSpec& spec, double h, double v);

// Raw-frame field for one member and timestep, in the ingestion layout: the
// domain length varies with h, the origin sits at the left, and the
// rightmost sample column is at x = max. Alignment and cropping are the
// consumer's job, exactly as with production dumps.
RawField generate_field(const SyntheticSpec& spec, double h, double v, double r, int t,
                        Variable variable);

// Recipe evaluated directly at the common-grid cell centers (natural
// order); the independent ground truth for error measurements.
Eigen::VectorXd synthetic_truth(const SyntheticSpec& spec, double h, double v, double r, int t,
                                Variable variable);

// Writes one table per (member, timestep) plus a members.tsv manifest with
// descriptors and break labels, all in the ingestion format.
void generate_ensemble(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

// Fills member metadata (n_timesteps, outcome) from the rule and recipe.
SimulationMeta make_member(const SyntheticSpec& spec, const std::string& key, double h, double v,
                           double r);

}  // namespace stsurro
