#include "stsurro/svd.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <limits>

#include "stsurro/errors.hpp"
#include "stsurro/manifest.hpp"
#include "stsurro/util.hpp"

namespace stsurro {

Index SvdBasis::rows() const {
    Index d = 0;
    for (const auto& b : u_blocks) d += b.rows();
    return d;
}

Index SvdBasis::block_offset(int k) const {
    Index off = 0;
    for (int i = 0; i < k; ++i) off += u_blocks[static_cast<size_t>(i)].rows();
    return off;
}

namespace {

Eigen::VectorXd row_mean(const BlockMatrixSource& x) {
    Eigen::VectorXd mean(x.rows());
    Index at = 0;
    for (int k = 0; k < x.n_blocks(); ++k) {
        Eigen::MatrixXd b = x.block(k);
        mean.segment(at, b.rows()) = b.rowwise().mean();
        at += b.rows();
    }
    return mean;
}

Eigen::MatrixXd load_block(const BlockMatrixSource& x, int k, const SvdOptions& opts,
                           const Eigen::VectorXd& mean, Index offset) {
    Eigen::MatrixXd b = x.block(k);
    if (!b.allFinite()) throw NonFiniteInputError("block " + std::to_string(k) +
                                                  " contains non-finite values");
    if (opts.centered) b.colwise() -= mean.segment(offset, b.rows());
    return b;
}

Index rank_from_sigma(const Eigen::VectorXd& sigma, Index n_cols) {
    if (sigma.size() == 0 || sigma[0] <= 0) return 0;
    const double tol =
        static_cast<double>(n_cols) * std::numeric_limits<double>::epsilon() * sigma[0];
    Index r = 0;
    while (r < sigma.size() && sigma[r] >= tol) ++r;
    return r;
}

// Fixed sign convention: scale each U column so its largest-magnitude entry
// is positive (ties resolved to the earliest flattened row), and flip the
// matching V column. Removes the SVD sign ambiguity so results are
// reproducible across blockings and runs.
void normalize_signs(std::vector<Eigen::MatrixXd>& u_blocks, Eigen::MatrixXd& v) {
    if (u_blocks.empty()) return;
    const Index m = u_blocks.front().cols();
    for (Index j = 0; j < m; ++j) {
        double best_abs = -1;
        double best_val = 1;
        for (const auto& b : u_blocks) {
            for (Index i = 0; i < b.rows(); ++i) {
                double a = std::abs(b(i, j));
                if (a > best_abs) {
                    best_abs = a;
                    best_val = b(i, j);
                }
            }
        }
        if (best_val < 0) {
            for (auto& b : u_blocks) b.col(j) = -b.col(j);
            v.col(j) = -v.col(j);
        }
    }
}

}  // namespace

SvdBasis svd_normal_equations(const BlockMatrixSource& x, const SvdOptions& opts) {
    const Index n = x.cols();
    SvdBasis basis;
    basis.centered = opts.centered;
    if (opts.centered) basis.mean = row_mean(x);

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    Index at = 0;
    for (int k = 0; k < x.n_blocks(); ++k) {
        Eigen::MatrixXd b = load_block(x, k, opts, basis.mean, at);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(b.transpose());
        at += b.rows();
    }

    // The solver reads only the lower triangle, which is what we filled.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success)
        throw FactorizationFailureError("eigen-decomposition of the Gram matrix failed");

    // Eigen returns ascending eigenvalues; flip to descending.
    Eigen::VectorXd lambda = es.eigenvalues().reverse();
    Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();

    basis.sigma = lambda.cwiseMax(0.0).cwiseSqrt();
    basis.effective_rank = rank_from_sigma(basis.sigma, n);
    const Index r = basis.effective_rank;
    basis.v = vecs.leftCols(r);

    Eigen::VectorXd inv_len = basis.sigma.head(r).cwiseInverse();
    basis.u_blocks.reserve(static_cast<size_t>(x.n_blocks()));
    at = 0;
    for (int k = 0; k < x.n_blocks(); ++k) {
        Eigen::MatrixXd b = load_block(x, k, opts, basis.mean, at);
        basis.u_blocks.push_back(b * basis.v * inv_len.asDiagonal());
        at += b.rows();
    }
    normalize_signs(basis.u_blocks, basis.v);
    return basis;
}

SvdBasis svd_block_qr(const BlockMatrixSource& x, const SvdOptions& opts) {
    const Index n = x.cols();
    SvdBasis basis;
    basis.centered = opts.centered;
    if (opts.centered) basis.mean = row_mean(x);

    // Reduction tree node: q maps this node's compact rows back to its
    // children's stacked rows (or to raw block rows at a leaf).
    struct Node {
        Eigen::MatrixXd q;
        int child_a = -1, child_b = -1;
        int leaf = -1;
        Index rows_a = 0;
    };
    std::vector<Node> nodes;
    std::vector<std::pair<int, Eigen::MatrixXd>> level;  // (node id, R factor)

    Index at = 0;
    for (int k = 0; k < x.n_blocks(); ++k) {
        Eigen::MatrixXd b = load_block(x, k, opts, basis.mean, at);
        at += b.rows();
        const Index m = std::min(b.rows(), n);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(b);
        Node node;
        node.q = qr.householderQ() * Eigen::MatrixXd::Identity(b.rows(), m);
        node.leaf = k;
        Eigen::MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
        nodes.push_back(std::move(node));
        level.emplace_back(static_cast<int>(nodes.size()) - 1, std::move(r));
    }

    // Pairwise reduction in fixed ascending order until one R remains.
    while (level.size() > 1) {
        std::vector<std::pair<int, Eigen::MatrixXd>> next;
        for (size_t i = 0; i + 1 < level.size(); i += 2) {
            const Eigen::MatrixXd& ra = level[i].second;
            const Eigen::MatrixXd& rb = level[i + 1].second;
            Eigen::MatrixXd stacked(ra.rows() + rb.rows(), n);
            stacked.topRows(ra.rows()) = ra;
            stacked.bottomRows(rb.rows()) = rb;
            const Index m = std::min(stacked.rows(), n);
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(stacked);
            Node node;
            node.q = qr.householderQ() * Eigen::MatrixXd::Identity(stacked.rows(), m);
            node.child_a = level[i].first;
            node.child_b = level[i + 1].first;
            node.rows_a = ra.rows();
            Eigen::MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
            nodes.push_back(std::move(node));
            next.emplace_back(static_cast<int>(nodes.size()) - 1, std::move(r));
        }
        if (level.size() % 2 == 1) next.push_back(std::move(level.back()));
        level = std::move(next);
    }

    const int root = level.front().first;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(level.front().second,
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    basis.sigma = svd.singularValues();
    basis.v = svd.matrixV();
    basis.effective_rank = rank_from_sigma(basis.sigma, n);

    // Push the small left factor back down the tree. Parents carry higher
    // ids than their children, so one descending pass suffices.
    std::vector<Eigen::MatrixXd> w(nodes.size());
    w[static_cast<size_t>(root)] = svd.matrixU();
    basis.u_blocks.assign(static_cast<size_t>(x.n_blocks()), Eigen::MatrixXd());
    for (int id = static_cast<int>(nodes.size()) - 1; id >= 0; --id) {
        const Node& node = nodes[static_cast<size_t>(id)];
        Eigen::MatrixXd full = node.q * w[static_cast<size_t>(id)];
        w[static_cast<size_t>(id)].resize(0, 0);
        if (node.leaf >= 0) {
            basis.u_blocks[static_cast<size_t>(node.leaf)] = std::move(full);
        } else {
            w[static_cast<size_t>(node.child_a)] = full.topRows(node.rows_a);
            w[static_cast<size_t>(node.child_b)] = full.bottomRows(full.rows() - node.rows_a);
        }
    }
    normalize_signs(basis.u_blocks, basis.v);
    return basis;
}

WeightVector project(const SvdBasis& basis, const Eigen::VectorXd& x, std::string provenance) {
    if (x.size() != basis.rows())
        throw DimensionMismatchError("snapshot length does not match basis");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(basis.n_basis());
    Index at = 0;
    for (const auto& b : basis.u_blocks) {
        if (basis.centered)
            w.noalias() += b.transpose() * (x.segment(at, b.rows()) - basis.mean.segment(at, b.rows()));
        else
            w.noalias() += b.transpose() * x.segment(at, b.rows());
        at += b.rows();
    }
    return {std::move(w), std::move(provenance)};
}

Eigen::MatrixXd project_all(const SvdBasis& basis, const BlockMatrixSource& x) {
    if (x.rows() != basis.rows() || x.n_blocks() != static_cast<int>(basis.u_blocks.size()))
        throw DimensionMismatchError("matrix does not match basis block layout");
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(basis.n_basis(), x.cols());
    Index at = 0;
    for (int k = 0; k < x.n_blocks(); ++k) {
        Eigen::MatrixXd b = x.block(k);
        if (basis.centered) b.colwise() -= basis.mean.segment(at, b.rows());
        w.noalias() += basis.u_blocks[static_cast<size_t>(k)].transpose() * b;
        at += b.rows();
    }
    return w;
}

Eigen::VectorXd reconstruct(const SvdBasis& basis, const Eigen::VectorXd& w, Index n) {
    if (n > w.size() || n > basis.n_basis())
        throw DimensionMismatchError("rank " + std::to_string(n) + " exceeds available weights");
    Eigen::VectorXd x(basis.rows());
    Index at = 0;
    for (const auto& b : basis.u_blocks) {
        x.segment(at, b.rows()).noalias() = b.leftCols(n) * w.head(n);
        if (basis.centered) x.segment(at, b.rows()) += basis.mean.segment(at, b.rows());
        at += b.rows();
    }
    return x;
}

double cumulative_variance(const Eigen::VectorXd& sigma, Index n) {
    if (n < 0 || n > sigma.size())
        throw IndexOutOfRangeError("n must lie in [0, len(sigma)]");
    const double total = sigma.squaredNorm();
    if (total <= 0) throw AllZeroSpectrumError("all singular values are zero");
    return 100.0 * sigma.head(n).squaredNorm() / total;
}

TruncationError truncation_error(const BlockMatrixSource& x, const SvdBasis& basis, Index n) {
    if (n < 0 || n > basis.n_basis())
        throw DimensionMismatchError("truncation rank out of range");
    if (x.rows() != basis.rows() || x.cols() != basis.v.rows())
        throw DimensionMismatchError("matrix does not match basis");
    TruncationError err;
    err.sigma_tail = basis.sigma.tail(basis.sigma.size() - n).squaredNorm();

    // X_n = U_n diag(sigma_n) V_n^T, streamed block by block.
    Eigen::MatrixXd proj = basis.sigma.head(n).asDiagonal() * basis.v.leftCols(n).transpose();
    Index at = 0;
    for (int k = 0; k < x.n_blocks(); ++k) {
        Eigen::MatrixXd b = x.block(k);
        if (basis.centered) b.colwise() -= basis.mean.segment(at, b.rows());
        b.noalias() -= basis.u_blocks[static_cast<size_t>(k)].leftCols(n) * proj;
        err.direct += b.squaredNorm();
        at += b.rows();
    }
    return err;
}

double orthonormality_error(const SvdBasis& basis) {
    const Index m = basis.n_basis();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, m);
    for (const auto& b : basis.u_blocks) g.noalias() += b.transpose() * b;
    g -= Eigen::MatrixXd::Identity(m, m);
    return g.cwiseAbs().maxCoeff();
}

void write_matrix_file(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const char magic[8] = {'S', 'T', 'S', 'B', 'L', 'K', '0', '1'};
    uint64_t fields[6] = {1, static_cast<uint64_t>(m.rows()), static_cast<uint64_t>(m.cols()), 0,
                          0, 0};
    os.write(magic, 8);
    os.write(reinterpret_cast<const char*>(fields), sizeof(fields));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
    if (!os) throw IoError("short write to " + path.string());
}

Eigen::MatrixXd read_matrix_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[8];
    uint64_t fields[6];
    is.read(magic, 8);
    is.read(reinterpret_cast<char*>(fields), sizeof(fields));
    if (!is || std::string(magic, 8) != "STSBLK01")
        throw IoError(path.string() + " is not a matrix file");
    Eigen::MatrixXd m(static_cast<Index>(fields[1]), static_cast<Index>(fields[2]));
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
    if (!is) throw IoError("short read from " + path.string());
    return m;
}

void save_basis(const SvdBasis& basis, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "basis.manifest");
    if (!os) throw IoError("cannot write basis manifest");
    os << "format = stsurro-svd-basis\n";
    os << "version = 1\n";
    os << "centered = " << (basis.centered ? 1 : 0) << "\n";
    os << "effective_rank = " << basis.effective_rank << "\n";
    os << "n_blocks = " << basis.u_blocks.size() << "\n";
    for (size_t k = 0; k < basis.u_blocks.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "u_block_%04zu.bin", k);
        os << "u_block." << k << " = " << name << "\n";
        write_matrix_file(dir / name, basis.u_blocks[k]);
    }
    write_matrix_file(dir / "sigma.bin", basis.sigma);
    write_matrix_file(dir / "v.bin", basis.v);
    if (basis.centered) write_matrix_file(dir / "mean.bin", basis.mean);
    os.close();
    if (!os) throw IoError("short write of basis manifest");
}

SvdBasis load_basis(const std::filesystem::path& dir) {
    auto kv = read_manifest(dir / "basis.manifest");
    if (kv["format"] != "stsurro-svd-basis")
        throw IoError(dir.string() + " is not a saved basis");
    SvdBasis basis;
    basis.centered = kv.at("centered") == "1";
    basis.effective_rank = std::stoll(kv.at("effective_rank"));
    size_t n_blocks = std::stoull(kv.at("n_blocks"));
    for (size_t k = 0; k < n_blocks; ++k)
        basis.u_blocks.push_back(read_matrix_file(dir / kv.at("u_block." + std::to_string(k))));
    basis.sigma = read_matrix_file(dir / "sigma.bin");
    basis.v = read_matrix_file(dir / "v.bin");
    if (basis.centered) basis.mean = read_matrix_file(dir / "mean.bin");
    return basis;
}

}  // namespace stsurro
