#include "stsurro/snapshot_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "stsurro/errors.hpp"
#include "stsurro/manifest.hpp"
#include "stsurro/util.hpp"

namespace stsurro {

static_assert(std::endian::native == std::endian::little,
              "block file I/O assumes a little-endian host");

RawField align_and_crop(const RawField& raw, double crop_x_min) {
    if (raw.points.empty()) throw EmptyFieldError("cannot align an empty field");
    double x_max = -std::numeric_limits<double>::infinity();
    for (const auto& p : raw.points) x_max = std::max(x_max, p.x);

    RawField out;
    out.variable = raw.variable;
    out.sim_key = raw.sim_key;
    out.timestep = raw.timestep;
    out.points.reserve(raw.points.size());
    for (const auto& p : raw.points) {
        double xs = p.x - x_max;
        if (xs < crop_x_min) continue;
        out.points.push_back({xs, p.y, p.value});
    }
    if (out.points.empty())
        throw EmptyFieldError("no points survive the crop at x >= " + format_double(crop_x_min));
    return out;
}

namespace {

// Candidate ordering for the 1-NN tie-break: squared distance, then source
// y, then source x.
struct Best {
    double d2 = std::numeric_limits<double>::infinity();
    double y = 0, x = 0, value = 0;

    void consider(double d2c, const RawPoint& p) {
        if (d2c < d2 || (d2c == d2 && (p.y < y || (p.y == y && p.x < x)))) {
            d2 = d2c;
            y = p.y;
            x = p.x;
            value = p.value;
        }
    }
};

}  // namespace

Eigen::VectorXd remap_1nn(const RawField& raw, const CommonGrid& grid) {
    if (raw.points.empty()) throw EmptyFieldError("cannot remap an empty field");
    grid.validate();
    for (const auto& p : raw.points)
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw NonFiniteInputError("raw field has non-finite coordinates");

    // Bin sources on the grid's own lattice; clamp so points outside the
    // grid bounds still land in a boundary bin.
    const Index bx = grid.nx, by = grid.ny;
    auto bin_of = [&](double x, double y) {
        Index ix = static_cast<Index>(std::floor((x - grid.x_min) / grid.delta));
        Index iy = static_cast<Index>(std::floor((y - grid.y_min) / grid.delta));
        ix = std::clamp<Index>(ix, 0, bx - 1);
        iy = std::clamp<Index>(iy, 0, by - 1);
        return std::pair<Index, Index>(ix, iy);
    };

    std::vector<std::vector<int>> bins(static_cast<size_t>(bx * by));
    for (int i = 0; i < static_cast<int>(raw.points.size()); ++i) {
        auto [ix, iy] = bin_of(raw.points[i].x, raw.points[i].y);
        bins[static_cast<size_t>(iy * bx + ix)].push_back(i);
    }

    Eigen::VectorXd out(grid.size());
    const double delta = grid.delta;
    for (Index jy = 0; jy < grid.ny; ++jy) {
        const double cy = grid.cell_y(jy);
        for (Index jx = 0; jx < grid.nx; ++jx) {
            const double cx = grid.cell_x(jx);
            Best best;
            // Expanding ring of bins around the target cell. A candidate in
            // ring r is at least (r-1)*delta away, so once that bound
            // exceeds the best distance the search is exact.
            for (Index ring = 0; ring < std::max(bx, by); ++ring) {
                if (best.d2 < std::numeric_limits<double>::infinity()) {
                    double lower = (static_cast<double>(ring) - 1.0) * delta;
                    if (lower > 0 && lower * lower > best.d2) break;
                }
                bool any_bin = false;
                Index x0 = jx - ring, x1 = jx + ring;
                Index y0 = jy - ring, y1 = jy + ring;
                for (Index iy = std::max<Index>(y0, 0); iy <= std::min<Index>(y1, by - 1); ++iy) {
                    bool y_edge = (iy == y0 || iy == y1);
                    for (Index ix = std::max<Index>(x0, 0); ix <= std::min<Index>(x1, bx - 1);
                         ++ix) {
                        if (!y_edge && ix != x0 && ix != x1) continue;  // ring perimeter only
                        any_bin = true;
                        for (int pi : bins[static_cast<size_t>(iy * bx + ix)]) {
                            const RawPoint& p = raw.points[static_cast<size_t>(pi)];
                            double dx = p.x - cx, dy = p.y - cy;
                            best.consider(dx * dx + dy * dy, p);
                        }
                    }
                }
                if (!any_bin && ring >= std::max(bx, by)) break;
            }
            out[grid.natural_index(jx, jy)] = best.value;
        }
    }
    return out;
}

InMemoryBlockMatrix::InMemoryBlockMatrix(std::vector<Eigen::MatrixXd> blocks)
    : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw DimensionMismatchError("block matrix needs at least one block");
    cols_ = blocks_[0].cols();
    for (const auto& b : blocks_) {
        if (b.cols() != cols_) throw DimensionMismatchError("blocks disagree on column count");
        rows_ += b.rows();
    }
}

InMemoryBlockMatrix split_rows(const Eigen::MatrixXd& x, int n_blocks) {
    auto ranges = make_block_ranges(x.rows(), n_blocks);
    std::vector<Eigen::MatrixXd> blocks;
    blocks.reserve(ranges.size());
    for (const auto& r : ranges) blocks.push_back(x.middleRows(r.begin, r.count()));
    return InMemoryBlockMatrix(std::move(blocks));
}

namespace {

constexpr char kMagic[8] = {'S', 'T', 'S', 'B', 'L', 'K', '0', '1'};
constexpr uint64_t kFormatVersion = 1;
constexpr size_t kHeaderBytes = 8 + 6 * 8;

struct BlockHeader {
    uint64_t version = kFormatVersion;
    uint64_t d_block = 0;
    uint64_t n_cols = 0;
    uint64_t y_begin = 0;
    uint64_t y_end = 0;
    uint64_t grid_hash = 0;
};

void write_header(std::FILE* f, const BlockHeader& h) {
    unsigned char buf[kHeaderBytes];
    std::memcpy(buf, kMagic, 8);
    uint64_t fields[6] = {h.version, h.d_block, h.n_cols, h.y_begin, h.y_end, h.grid_hash};
    std::memcpy(buf + 8, fields, sizeof(fields));
    if (std::fwrite(buf, 1, kHeaderBytes, f) != kHeaderBytes)
        throw IoError("short write of block header");
}

BlockHeader read_header(std::FILE* f, const std::string& path) {
    unsigned char buf[kHeaderBytes];
    if (std::fread(buf, 1, kHeaderBytes, f) != kHeaderBytes)
        throw IoError("short read of block header in " + path);
    if (std::memcmp(buf, kMagic, 8) != 0) throw IoError(path + " is not a block file");
    BlockHeader h;
    uint64_t fields[6];
    std::memcpy(fields, buf + 8, sizeof(fields));
    h.version = fields[0];
    h.d_block = fields[1];
    h.n_cols = fields[2];
    h.y_begin = fields[3];
    h.y_end = fields[4];
    h.grid_hash = fields[5];
    if (h.version != kFormatVersion)
        throw IoError("unsupported block format version in " + path);
    return h;
}

std::string block_file_name(int k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "block_%04d.bin", k);
    return buf;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& p, const char* mode) {
    FilePtr f(std::fopen(p.string().c_str(), mode));
    if (!f) throw IoError("cannot open " + p.string());
    return f;
}

}  // namespace

struct BlockStoreWriter::Impl {
    std::filesystem::path dir;
    CommonGrid grid;
    Variable variable;
    std::vector<FilePtr> files;
    std::vector<ColumnDescriptor> columns;
    std::set<std::string> seen;
    std::vector<std::pair<std::string, std::string>> extras;
    bool finalized = false;
};

BlockStoreWriter::BlockStoreWriter(const std::filesystem::path& dir, const CommonGrid& grid,
                                   Variable variable)
    : impl_(std::make_unique<Impl>()) {
    grid.validate();
    impl_->dir = dir;
    impl_->grid = grid;
    impl_->variable = variable;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    for (int k = 0; k < grid.n_blocks(); ++k) {
        auto f = open_file(dir / block_file_name(k), "wb");
        BlockHeader h;
        h.d_block = static_cast<uint64_t>(grid.block_rows(k));
        h.n_cols = 0;  // patched in finalize()
        h.y_begin = static_cast<uint64_t>(grid.block_ranges[k].begin);
        h.y_end = static_cast<uint64_t>(grid.block_ranges[k].end);
        h.grid_hash = grid.descriptor_hash();
        write_header(f.get(), h);
        impl_->files.push_back(std::move(f));
    }
}

BlockStoreWriter::~BlockStoreWriter() = default;

void BlockStoreWriter::append_column(const ColumnDescriptor& desc,
                                     const Eigen::VectorXd& snapshot) {
    if (snapshot.size() != impl_->grid.size())
        throw DimensionMismatchError("snapshot length " + std::to_string(snapshot.size()) +
                                     " != grid size " + std::to_string(impl_->grid.size()));
    std::string id = desc.sim_key + "/" + std::to_string(desc.timestep);
    if (!impl_->seen.insert(id).second)
        throw DuplicateColumnError("column " + id + " appended twice");
    for (int k = 0; k < impl_->grid.n_blocks(); ++k) {
        Index off = impl_->grid.block_offset(k);
        Index n = impl_->grid.block_rows(k);
        if (std::fwrite(snapshot.data() + off, sizeof(double), static_cast<size_t>(n),
                        impl_->files[static_cast<size_t>(k)].get()) != static_cast<size_t>(n))
            throw IoError("short write appending column to block " + std::to_string(k));
    }
    impl_->columns.push_back(desc);
}

void BlockStoreWriter::set_extra(const std::string& key, const std::string& value) {
    impl_->extras.emplace_back(key, value);
}

BlockStore BlockStoreWriter::finalize() {
    if (impl_->finalized) throw IoError("store already finalized");
    impl_->finalized = true;
    const uint64_t n = static_cast<uint64_t>(impl_->columns.size());
    for (int k = 0; k < impl_->grid.n_blocks(); ++k) {
        std::FILE* f = impl_->files[static_cast<size_t>(k)].get();
        // n_cols sits right after magic + version + d_block.
        if (std::fseek(f, 8 + 2 * 8, SEEK_SET) != 0) throw IoError("seek failed patching header");
        if (std::fwrite(&n, sizeof(n), 1, f) != 1) throw IoError("write failed patching header");
        impl_->files[static_cast<size_t>(k)].reset();
    }

    std::ofstream os(impl_->dir / "manifest.txt");
    if (!os) throw IoError("cannot write store manifest");
    os << "format = stsurro-blockstore\n";
    os << "version = " << kFormatVersion << "\n";
    os << "variable = " << variable_name(impl_->variable) << "\n";
    write_grid_geometry(os, impl_->grid);
    write_block_ranges(os, impl_->grid);
    for (int k = 0; k < impl_->grid.n_blocks(); ++k)
        os << "block." << k << ".file = " << block_file_name(k) << "\n";
    write_columns(os, impl_->columns);
    for (const auto& [k, v] : impl_->extras) os << "extra." << k << " = " << v << "\n";
    os.close();

    return BlockStore::open(impl_->dir);
}

BlockStore BlockStore::open(const std::filesystem::path& dir) {
    auto kv = read_manifest(dir / "manifest.txt");
    if (kv["format"] != "stsurro-blockstore")
        throw IoError(dir.string() + " is not a block store");
    BlockStore s;
    s.dir_ = dir;
    s.grid_ = grid_from_manifest(kv);
    s.variable_ = variable_from_name(kv.at("variable"));
    s.grid_.block_ranges = block_ranges_from_manifest(kv);
    for (int k = 0; k < s.grid_.n_blocks(); ++k)
        s.block_files_.push_back(kv.at("block." + std::to_string(k) + ".file"));
    s.grid_.validate();
    s.columns_ = columns_from_manifest(kv);
    for (const auto& [k, v] : kv)
        if (k.rfind("extra.", 0) == 0) s.extras_.emplace_back(k.substr(6), v);
    return s;
}

Eigen::MatrixXd BlockStore::block(int k) const {
    if (k < 0 || k >= n_blocks()) throw IndexOutOfRangeError("block " + std::to_string(k));
    auto path = dir_ / block_files_[static_cast<size_t>(k)];
    auto f = open_file(path, "rb");
    BlockHeader h = read_header(f.get(), path.string());
    if (h.grid_hash != grid_.descriptor_hash())
        throw IoError("grid hash mismatch in " + path.string());
    if (static_cast<Index>(h.d_block) != grid_.block_rows(k) ||
        static_cast<Index>(h.n_cols) != cols())
        throw IoError("block dimensions disagree with manifest in " + path.string());
    Eigen::MatrixXd m(static_cast<Index>(h.d_block), static_cast<Index>(h.n_cols));
    size_t want = static_cast<size_t>(m.size());
    if (std::fread(m.data(), sizeof(double), want, f.get()) != want)
        throw IoError("short read of block payload in " + path.string());
    return m;
}

Eigen::VectorXd BlockStore::read_column(Index j) const {
    if (j < 0 || j >= cols()) throw IndexOutOfRangeError("column " + std::to_string(j));
    Eigen::VectorXd out(rows());
    Index at = 0;
    for (int k = 0; k < n_blocks(); ++k) {
        auto path = dir_ / block_files_[static_cast<size_t>(k)];
        auto f = open_file(path, "rb");
        BlockHeader h = read_header(f.get(), path.string());
        Index d = static_cast<Index>(h.d_block);
        long off = static_cast<long>(kHeaderBytes + static_cast<size_t>(j) *
                                                        static_cast<size_t>(d) * sizeof(double));
        if (std::fseek(f.get(), off, SEEK_SET) != 0)
            throw IoError("seek failed in " + path.string());
        if (std::fread(out.data() + at, sizeof(double), static_cast<size_t>(d), f.get()) !=
            static_cast<size_t>(d))
            throw IoError("short column read in " + path.string());
        at += d;
    }
    return out;
}

BlockStore assemble(const std::filesystem::path& dir, const CommonGrid& grid, Variable variable,
                    const std::vector<std::pair<ColumnDescriptor, Eigen::VectorXd>>& snapshots) {
    BlockStoreWriter w(dir, grid, variable);
    for (const auto& [desc, vec] : snapshots) w.append_column(desc, vec);
    return w.finalize();
}

}  // namespace stsurro
