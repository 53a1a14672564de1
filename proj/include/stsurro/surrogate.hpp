#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "stsurro/clustering.hpp"
#include "stsurro/gp.hpp"
#include "stsurro/grid.hpp"
#include "stsurro/snapshot_store.hpp"
#include "stsurro/svd.hpp"

namespace stsurro {

struct WeightSelectionPolicy {
    Index n_max = 50;
    double rel_std_threshold = 0.5;
    double variance_target = 90.0;  // percent

    void validate() const;
};

struct IndexPrediction {
    double mean = 0;
    double std = 0;
    double train_scale = 0;  // std of this index's training weights
};

struct WeightSelection {
    Index n = 0;              // uncertainty-limited count (the answer)
    Index variance_rank = 0;  // smallest count reaching the variance target
    bool conflict = false;
    std::string warning;
};

// Largest m such that every index < m is predicted with std below
// rel_std_threshold * train_scale. If that m falls short of the count
// needed to reach the variance target, the uncertainty-limited m is still
// returned, with a warning attached.
WeightSelection select_n_weights(const std::vector<IndexPrediction>& predictions,
                                 const Eigen::VectorXd& sigma,
                                 const WeightSelectionPolicy& policy);

enum class SurrogateKind { linear, locally_linear };

struct LocalSurrogate {
    SvdBasis basis;
    std::vector<Index> columns;        // indices into the bundle's descriptors
    Eigen::MatrixXd training_weights;  // n_models x columns.size()
    std::vector<GpModel> weight_models;
};

struct SurrogateOptions {
    WeightSelectionPolicy policy;
    GpFitOptions gp;
    int workers = 1;
};

struct SurrogateBundle {
    SurrogateKind kind = SurrogateKind::linear;
    CommonGrid grid;
    TimestepRule rule;
    Variable variable = Variable::mass;
    WeightSelectionPolicy policy;
    std::vector<ColumnDescriptor> descriptors;
    ClusterModel clusters;  // locally_linear only
    std::vector<LocalSurrogate> locals;

    Index n_models() const {
        return locals.empty() ? 0 : static_cast<Index>(locals.front().weight_models.size());
    }
};

// Block-QR SVD of the full matrix, training weights by projection, one GP
// per weight index up to the policy cap.
SurrogateBundle fit_linear(const BlockMatrixSource& x,
                           const std::vector<ColumnDescriptor>& descriptors,
                           const CommonGrid& grid, const TimestepRule& rule, Variable variable,
                           const SurrogateOptions& opts);

// The linear pipeline applied independently to each cluster's column subset
// (same block layout). With k = 1 this reproduces fit_linear exactly.
SurrogateBundle fit_locally_linear(const BlockMatrixSource& x,
                                   const std::vector<ColumnDescriptor>& descriptors,
                                   const CommonGrid& grid, const TimestepRule& rule,
                                   Variable variable, const ClusterModel& clusters,
                                   const SurrogateOptions& opts);

struct FieldPrediction {
    Eigen::VectorXd field;
    int cluster = 0;
    Index n_used = 0;
    std::vector<IndexPrediction> weights;
    WeightSelection selection;
    std::vector<std::string> warnings;
};

// Predicts every modeled weight at (h, v, r, t), picks the weight count
// (n_override > 0 skips the policy), and reconstructs the field. Queries
// outside the training hull get per-dimension extrapolation warnings.
FieldPrediction predict_field(const SurrogateBundle& bundle, double h, double v, double r,
                              double t, Index n_override = 0);

// Values of the grid row nearest to y, restricted to x_range, ascending x.
std::vector<std::pair<double, double>> lineout(const Eigen::VectorXd& field,
                                               const CommonGrid& grid, double y,
                                               std::pair<double, double> x_range);

// First threshold crossing walking from the right; linear interpolation
// between the bracketing samples. Empty when the line never crosses.
std::optional<double> locate_plate_edge(const std::vector<std::pair<double, double>>& line,
                                        double threshold_fraction);

void save_bundle(const SurrogateBundle& bundle, const std::filesystem::path& dir);
SurrogateBundle load_bundle(const std::filesystem::path& dir);

}  // namespace stsurro
