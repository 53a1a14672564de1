#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stsurro/snapshot_store.hpp"

namespace stsurro {

// Left singular vectors ("eigen-snapshots") kept in the same row-block
// layout as the snapshot matrix they came from, plus the full spectrum and
// right singular vectors.
struct SvdBasis {
    Eigen::VectorXd sigma;                  // descending, length min(D, N)
    std::vector<Eigen::MatrixXd> u_blocks;  // block k: block_rows(k) x n_basis
    Eigen::MatrixXd v;                      // N x n_basis
    bool centered = false;
    Eigen::VectorXd mean;  // length D when centered, empty otherwise
    Index effective_rank = 0;

    Index n_basis() const { return u_blocks.empty() ? 0 : u_blocks.front().cols(); }
    Index rows() const;
    Index block_offset(int k) const;
};

struct SvdOptions {
    bool centered = false;
};

// SVD via eigen-decomposition of the Gram matrix X^T X, accumulated block by
// block; u_i = X v_i / sqrt(lambda_i). Cheap to set up but loses accuracy on
// ill-conditioned data, so it is kept as a comparison baseline. Columns whose
// eigenvalue falls below the rank tolerance are dropped from U and V.
SvdBasis svd_normal_equations(const BlockMatrixSource& x, const SvdOptions& opts = {});

// SVD via hierarchical thin QR over the row blocks: factor each block, stack
// pairs of R factors and re-factor until one R remains, take its dense SVD,
// then push the small left factor back down the tree to form U. This is the
// default path.
SvdBasis svd_block_qr(const BlockMatrixSource& x, const SvdOptions& opts = {});

struct WeightVector {
    Eigen::VectorXd w;
    std::string provenance;  // "sim_key/timestep" or "predicted"
};

// w_k = u_k . (x - mean), accumulated blockwise.
WeightVector project(const SvdBasis& basis, const Eigen::VectorXd& x,
                     std::string provenance = {});

// Projects every column of x in one streaming pass; returns n_basis x N.
Eigen::MatrixXd project_all(const SvdBasis& basis, const BlockMatrixSource& x);

// Rank-n reconstruction: sum of the first n weighted eigen-snapshots, plus
// the mean when the basis is centered.
Eigen::VectorXd reconstruct(const SvdBasis& basis, const Eigen::VectorXd& w, Index n);

// 100 * sum_{i<=n} sigma_i^2 / sum_i sigma_i^2.
double cumulative_variance(const Eigen::VectorXd& sigma, Index n);

struct TruncationError {
    double sigma_tail = 0;  // sum of squared excluded singular values
    double direct = 0;      // streamed ||X - X_n||_F^2
};

// Both sides of the truncation-error identity; callers assert agreement.
TruncationError truncation_error(const BlockMatrixSource& x, const SvdBasis& basis, Index n);

// max |U^T U - I|, accumulated blockwise.
double orthonormality_error(const SvdBasis& basis);

void save_basis(const SvdBasis& basis, const std::filesystem::path& dir);
SvdBasis load_basis(const std::filesystem::path& dir);

// Bare matrix serialization used by basis and bundle files; same binary
// header and payload layout as a store block, with no grid association.
void write_matrix_file(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_file(const std::filesystem::path& path);

}  // namespace stsurro
