#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "stsurro/snapshot_store.hpp"

namespace stsurro {

// Projects every snapshot column through a sparse sign matrix with entries
// {+sqrt(s)/sqrt(d), 0, -sqrt(s)/sqrt(d)} and P(nonzero) = 1/s. Projector
// rows are generated deterministically from (seed, snapshot-matrix row), so
// blocks stream through without the projector ever being stored. Returns the
// N x d matrix of projected snapshots.
Eigen::MatrixXd sparse_random_project(const BlockMatrixSource& x, Index d, uint64_t seed,
                                      double density_s = 0);  // 0 -> sqrt(D)

struct ClusterModel {
    int k = 0;
    std::vector<int> assignments;  // per snapshot
    Eigen::MatrixXd centroids;     // k x d, projected space
    uint64_t projection_seed = 0;
    Index projection_dim = 0;
    double projection_density = 0;
    double inertia = 0;

    std::vector<Index> cluster_members(int cluster) const;
};

// Best of n_init Lloyd runs with k-means++ seeding; iterates to an
// assignment fixpoint (or 300 iterations), repairing empty clusters by
// re-seeding them at the farthest point of the largest cluster.
ClusterModel kmeans(const Eigen::MatrixXd& points, int k, int n_init, uint64_t seed);

struct KStability {
    int k = 0;
    double mean_ari = 0;
};

struct ChooseKResult {
    int k = 0;
    std::vector<KStability> table;
};

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Stability-based cluster-count selection: for each k, the mean pairwise ARI
// across repeated runs. Picks the smallest k with mean ARI >= 0.9 that
// strictly beats k+1; falls back to the smallest k in the range when the
// stability profile is flat.
ChooseKResult choose_k(const Eigen::MatrixXd& points, int k_lo, int k_hi, int n_seeds,
                       uint64_t seed = 0);

// Variant crossing several projections of the same data with the k-means
// seeds, per the stability recipe.
ChooseKResult choose_k(const std::vector<Eigen::MatrixXd>& point_sets, int k_lo, int k_hi,
                       int n_seeds, uint64_t seed = 0);

// Cluster of the training snapshot nearest to the query in normalized
// (h, v, r, t/t_last) space. t_last comes from each descriptor's own
// simulation. No field is projected at query time; only descriptors.
int assign_query_cluster(const ClusterModel& model, const std::vector<ColumnDescriptor>& training,
                         double h, double v, double r, double t, double query_t_last);

void save_cluster_model(const ClusterModel& model, const std::filesystem::path& path);
ClusterModel load_cluster_model(const std::filesystem::path& path);

}  // namespace stsurro
