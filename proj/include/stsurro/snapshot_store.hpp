#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stsurro/grid.hpp"

namespace stsurro {

// Shifts x so the rightmost point sits at x = 0 (origin at the lower right),
// then drops points with shifted x < crop_x_min. y is untouched.
RawField align_and_crop(const RawField& raw, double crop_x_min);

// Remaps scattered raw points onto the grid's cell centers with an exact
// 1-nearest-neighbor rule. Equidistant sources tie-break to the smallest y,
// then smallest x. Uses uniform spatial binning with an expanding ring
// search, so semantics match brute force but large inputs stay tractable.
Eigen::VectorXd remap_1nn(const RawField& raw, const CommonGrid& grid);

struct ColumnDescriptor {
    std::string sim_key;
    int timestep = 0;
    double he_length = 0;     // h
    double tip_velocity = 0;  // v
    double radius = 0;        // r
    double time = 0;          // t, the GP time input (timestep index)
};

// Read access to a D x N matrix stored as K row blocks. The SVD engine and
// clustering stream through this interface so on-disk stores and in-memory
// test matrices share one code path.
class BlockMatrixSource {
public:
    virtual ~BlockMatrixSource() = default;
    virtual Index rows() const = 0;
    virtual Index cols() const = 0;
    virtual int n_blocks() const = 0;
    virtual Index block_rows(int k) const = 0;
    virtual Eigen::MatrixXd block(int k) const = 0;  // block_rows(k) x cols()
};

class InMemoryBlockMatrix : public BlockMatrixSource {
public:
    explicit InMemoryBlockMatrix(std::vector<Eigen::MatrixXd> blocks);
    Index rows() const override { return rows_; }
    Index cols() const override { return cols_; }
    int n_blocks() const override { return static_cast<int>(blocks_.size()); }
    Index block_rows(int k) const override { return blocks_.at(k).rows(); }
    Eigen::MatrixXd block(int k) const override { return blocks_.at(k); }

private:
    std::vector<Eigen::MatrixXd> blocks_;
    Index rows_ = 0, cols_ = 0;
};

// Splits a dense matrix into K row blocks (near-even, ascending).
InMemoryBlockMatrix split_rows(const Eigen::MatrixXd& x, int n_blocks);

// On-disk block snapshot matrix.
//
// Each block file is:
//   magic "STSBLK01" | u64 version | u64 d_block | u64 n_cols |
//   u64 y_begin | u64 y_end | u64 grid_hash
// followed by d_block * n_cols IEEE-754 binary64 little-endian values in
// column-major order. A text manifest in the same directory lists the grid,
// the block files, and the column descriptors.
class BlockStore : public BlockMatrixSource {
public:
    static BlockStore open(const std::filesystem::path& dir);

    Index rows() const override { return grid_.size(); }
    Index cols() const override { return static_cast<Index>(columns_.size()); }
    int n_blocks() const override { return grid_.n_blocks(); }
    Index block_rows(int k) const override { return grid_.block_rows(k); }
    Eigen::MatrixXd block(int k) const override;

    Eigen::VectorXd read_column(Index j) const;

    const CommonGrid& grid() const { return grid_; }
    const std::vector<ColumnDescriptor>& columns() const { return columns_; }
    Variable variable() const { return variable_; }
    const std::filesystem::path& dir() const { return dir_; }

    // Extra key/value pairs carried in the manifest (e.g. the timestep rule).
    const std::vector<std::pair<std::string, std::string>>& extras() const { return extras_; }

private:
    friend class BlockStoreWriter;
    BlockStore() = default;
    std::filesystem::path dir_;
    CommonGrid grid_;
    Variable variable_ = Variable::mass;
    std::vector<ColumnDescriptor> columns_;
    std::vector<std::string> block_files_;
    std::vector<std::pair<std::string, std::string>> extras_;
};

// Streams columns into K block files without holding the full matrix.
class BlockStoreWriter {
public:
    BlockStoreWriter(const std::filesystem::path& dir, const CommonGrid& grid, Variable variable);
    ~BlockStoreWriter();
    BlockStoreWriter(const BlockStoreWriter&) = delete;
    BlockStoreWriter& operator=(const BlockStoreWriter&) = delete;

    void append_column(const ColumnDescriptor& desc, const Eigen::VectorXd& snapshot);
    void set_extra(const std::string& key, const std::string& value);
    BlockStore finalize();  // patches headers, writes manifest

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Writes all snapshots at once; column order is the input order.
BlockStore assemble(const std::filesystem::path& dir, const CommonGrid& grid, Variable variable,
                    const std::vector<std::pair<ColumnDescriptor, Eigen::VectorXd>>& snapshots);

}  // namespace stsurro
