#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace stsurro {

struct AxisRange {
    std::string name;
    double lo = 0;
    double hi = 1;
};

// Excludes points with coef_a * x[axis_a] + coef_b * x[axis_b] > bound.
// Axis-aligned cuts are the coef_b = 0 special case.
struct HalfPlaneExclusion {
    int axis_a = 0;
    int axis_b = 0;
    double coef_a = 0;
    double coef_b = 0;
    double bound = 0;
};

struct InputBox {
    std::vector<AxisRange> axes;
    std::vector<HalfPlaneExclusion> exclusions;

    int dim() const { return static_cast<int>(axes.size()); }
    bool excluded(const Eigen::VectorXd& p) const;
    bool contains(const Eigen::VectorXd& p) const;
    Eigen::VectorXd normalize(const Eigen::VectorXd& p) const;  // per-axis to [0,1]
    void validate() const;
};

// The simulation input box from the ensemble design: h in [5,15] cm,
// v in [0.6,0.95] cm/us, r in [0.125,0.25] cm.
InputBox default_input_box();

// Progressive best-candidate sampling: appends m_new points to `existing`
// (rows are points). Each new point is the best of c uniform candidates,
// judged by its minimum normalized distance to everything accepted so far.
// Existing points are never moved, so designs extend incrementally.
Eigen::MatrixXd best_candidate_extend(const Eigen::MatrixXd& existing, int m_new, int c,
                                      const InputBox& box, uint64_t seed);

// Exact minimum pairwise distance in normalized coordinates.
double min_pairwise_distance(const Eigen::MatrixXd& points, const InputBox& box);

}  // namespace stsurro
