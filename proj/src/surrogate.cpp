#include "stsurro/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stsurro/errors.hpp"
#include "stsurro/manifest.hpp"
#include "stsurro/util.hpp"

namespace stsurro {

void WeightSelectionPolicy::validate() const {
    if (n_max < 1) throw ConfigError("n_max must be >= 1");
    if (!(variance_target > 0 && variance_target <= 100))
        throw ConfigError("variance_target must lie in (0, 100]");
    if (rel_std_threshold < 0) throw ConfigError("rel_std_threshold must be >= 0");
}

WeightSelection select_n_weights(const std::vector<IndexPrediction>& predictions,
                                 const Eigen::VectorXd& sigma,
                                 const WeightSelectionPolicy& policy) {
    policy.validate();
    const Index n_avail = std::min<Index>(static_cast<Index>(predictions.size()), policy.n_max);

    WeightSelection sel;
    sel.n = n_avail;
    for (Index k = 0; k < n_avail; ++k) {
        const auto& p = predictions[static_cast<size_t>(k)];
        // Tiny absolute slack so an exactly-constant training weight does
        // not reject a numerically-zero predicted std.
        double limit = policy.rel_std_threshold * p.train_scale +
                       1e-12 * std::max(1.0, std::abs(p.mean));
        if (p.std > limit) {
            sel.n = k;
            break;
        }
    }

    double total = sigma.squaredNorm();
    if (total > 0) {
        double partial = 0;
        Index m = 0;
        while (m < sigma.size() && 100.0 * partial / total < policy.variance_target) {
            partial += sigma[m] * sigma[m];
            ++m;
        }
        sel.variance_rank = m;
    }

    if (sel.n < sel.variance_rank) {
        sel.conflict = true;
        sel.warning = "uncertainty limits the reconstruction to " + std::to_string(sel.n) +
                      " weights, below the " + std::to_string(sel.variance_rank) +
                      " needed for " + format_double(policy.variance_target) +
                      "% variance";
    }
    return sel;
}

namespace {

Eigen::MatrixXd descriptor_inputs(const std::vector<ColumnDescriptor>& descriptors,
                                  const std::vector<Index>& columns) {
    Eigen::MatrixXd inputs(static_cast<Index>(columns.size()), 4);
    for (size_t i = 0; i < columns.size(); ++i) {
        const auto& c = descriptors[static_cast<size_t>(columns[i])];
        inputs.row(static_cast<Index>(i)) << c.he_length, c.tip_velocity, c.radius, c.time;
    }
    return inputs;
}

LocalSurrogate fit_local(const BlockMatrixSource& x,
                         const std::vector<ColumnDescriptor>& descriptors,
                         const std::vector<Index>& columns, int cluster_id,
                         const SurrogateOptions& opts) {
    LocalSurrogate local;
    local.columns = columns;

    // Column subset in the same block layout.
    std::vector<Eigen::MatrixXd> blocks;
    blocks.reserve(static_cast<size_t>(x.n_blocks()));
    for (int k = 0; k < x.n_blocks(); ++k) {
        Eigen::MatrixXd full = x.block(k);
        Eigen::MatrixXd sub(full.rows(), static_cast<Index>(columns.size()));
        for (size_t j = 0; j < columns.size(); ++j)
            sub.col(static_cast<Index>(j)) = full.col(columns[j]);
        blocks.push_back(std::move(sub));
    }
    InMemoryBlockMatrix sub(std::move(blocks));

    local.basis = svd_block_qr(sub);
    const Index n_models = std::min<Index>(opts.policy.n_max, local.basis.n_basis());
    local.training_weights = project_all(local.basis, sub).topRows(n_models);

    Eigen::MatrixXd inputs = descriptor_inputs(descriptors, columns);
    local.weight_models.resize(static_cast<size_t>(n_models));
    parallel_for(static_cast<size_t>(n_models), opts.workers, [&](size_t k) {
        GpFitOptions gp = opts.gp;
        gp.seed = mix_seed(opts.gp.seed,
                           (static_cast<uint64_t>(cluster_id) << 32) | static_cast<uint64_t>(k));
        local.weight_models[k] =
            fit_gp(inputs, local.training_weights.row(static_cast<Index>(k)), gp);
    });
    return local;
}

std::vector<Index> all_columns(Index n) {
    std::vector<Index> cols(static_cast<size_t>(n));
    for (Index j = 0; j < n; ++j) cols[static_cast<size_t>(j)] = j;
    return cols;
}

}  // namespace

SurrogateBundle fit_linear(const BlockMatrixSource& x,
                           const std::vector<ColumnDescriptor>& descriptors,
                           const CommonGrid& grid, const TimestepRule& rule, Variable variable,
                           const SurrogateOptions& opts) {
    if (static_cast<Index>(descriptors.size()) != x.cols())
        throw DimensionMismatchError("descriptor count does not match matrix columns");
    opts.policy.validate();

    SurrogateBundle bundle;
    bundle.kind = SurrogateKind::linear;
    bundle.grid = grid;
    bundle.rule = rule;
    bundle.variable = variable;
    bundle.policy = opts.policy;
    bundle.descriptors = descriptors;
    bundle.locals.push_back(fit_local(x, descriptors, all_columns(x.cols()), 0, opts));
    return bundle;
}

SurrogateBundle fit_locally_linear(const BlockMatrixSource& x,
                                   const std::vector<ColumnDescriptor>& descriptors,
                                   const CommonGrid& grid, const TimestepRule& rule,
                                   Variable variable, const ClusterModel& clusters,
                                   const SurrogateOptions& opts) {
    if (static_cast<Index>(descriptors.size()) != x.cols())
        throw DimensionMismatchError("descriptor count does not match matrix columns");
    if (static_cast<Index>(clusters.assignments.size()) != x.cols())
        throw DimensionMismatchError("cluster assignments do not cover all columns");
    opts.policy.validate();

    SurrogateBundle bundle;
    bundle.kind = SurrogateKind::locally_linear;
    bundle.grid = grid;
    bundle.rule = rule;
    bundle.variable = variable;
    bundle.policy = opts.policy;
    bundle.descriptors = descriptors;
    bundle.clusters = clusters;
    for (int c = 0; c < clusters.k; ++c) {
        auto members = clusters.cluster_members(c);
        if (members.size() < 3)
            throw ClusterTooSmallError("cluster " + std::to_string(c) + " has only " +
                                       std::to_string(members.size()) + " snapshots");
        bundle.locals.push_back(fit_local(x, descriptors, members, c, opts));
    }
    return bundle;
}

FieldPrediction predict_field(const SurrogateBundle& bundle, double h, double v, double r,
                              double t, Index n_override) {
    if (bundle.locals.empty()) throw EmptyModelError("bundle has no fitted surrogate");

    FieldPrediction out;
    const double t_last = bundle.rule.n_steps(h, v) - 1;

    if (bundle.kind == SurrogateKind::locally_linear)
        out.cluster = assign_query_cluster(bundle.clusters, bundle.descriptors, h, v, r, t, t_last);
    const LocalSurrogate& local = bundle.locals.at(static_cast<size_t>(out.cluster));

    // Extrapolation check, per dimension against the training hull.
    {
        double lo[4], hi[4];
        const char* names[4] = {"he_length", "tip_velocity", "radius", "time"};
        double q[4] = {h, v, r, t};
        for (int d = 0; d < 4; ++d) lo[d] = 1e300, hi[d] = -1e300;
        for (Index j : local.columns) {
            const auto& c = bundle.descriptors[static_cast<size_t>(j)];
            double vals[4] = {c.he_length, c.tip_velocity, c.radius, c.time};
            for (int d = 0; d < 4; ++d) {
                lo[d] = std::min(lo[d], vals[d]);
                hi[d] = std::max(hi[d], vals[d]);
            }
        }
        for (int d = 0; d < 4; ++d)
            if (q[d] < lo[d] || q[d] > hi[d])
                out.warnings.push_back(std::string("extrapolation: ") + names[d] + " = " +
                                       format_double(q[d]) + " outside training hull [" +
                                       format_double(lo[d]) + ", " + format_double(hi[d]) + "]");
    }

    const Index n_models = static_cast<Index>(local.weight_models.size());
    Eigen::VectorXd means(n_models);
    out.weights.reserve(static_cast<size_t>(n_models));
    for (Index k = 0; k < n_models; ++k) {
        GpPrediction p = local.weight_models[static_cast<size_t>(k)].predict(h, v, r, t);
        const auto row = local.training_weights.row(k);
        double scale = std::sqrt((row.array() - row.mean()).square().mean());
        out.weights.push_back({p.mean, p.std, scale});
        means[k] = p.mean;
    }

    out.selection = select_n_weights(out.weights, local.basis.sigma, bundle.policy);
    if (out.selection.conflict) out.warnings.push_back(out.selection.warning);
    out.n_used = n_override > 0 ? std::min(n_override, n_models) : out.selection.n;
    out.field = reconstruct(local.basis, means, out.n_used);
    return out;
}

std::vector<std::pair<double, double>> lineout(const Eigen::VectorXd& field,
                                               const CommonGrid& grid, double y,
                                               std::pair<double, double> x_range) {
    if (field.size() != grid.size()) throw DimensionMismatchError("field does not match grid");
    if (y < grid.y_min || y > grid.y_max)
        throw OutOfDomainError("y = " + format_double(y) + " outside the grid");
    auto [x0, x1] = x_range;
    if (x0 > x1 || x0 < grid.x_min || x1 > grid.x_max)
        throw OutOfDomainError("x range outside the grid");

    Index jy = std::clamp<Index>(static_cast<Index>(std::floor((y - grid.y_min) / grid.delta)), 0,
                                 grid.ny - 1);
    std::vector<std::pair<double, double>> line;
    for (Index i = 0; i < grid.nx; ++i) {
        double cx = grid.cell_x(i);
        if (cx < x0 || cx > x1) continue;
        line.emplace_back(cx, field[grid.natural_index(i, jy)]);
    }
    return line;
}

std::optional<double> locate_plate_edge(const std::vector<std::pair<double, double>>& line,
                                        double threshold_fraction) {
    if (line.empty()) return std::nullopt;
    double peak = line.front().second;
    for (const auto& [x, v] : line) peak = std::max(peak, v);
    if (peak <= 0) return std::nullopt;
    const double level = threshold_fraction * peak;

    auto above = [&](size_t i) { return line[i].second >= level; };
    for (size_t i = line.size() - 1; i > 0; --i) {
        if (above(i) == above(i - 1)) continue;
        const auto& [xa, va] = line[i - 1];
        const auto& [xb, vb] = line[i];
        if (vb == va) return xb;
        return xa + (level - va) / (vb - va) * (xb - xa);
    }
    return std::nullopt;
}

namespace {

std::string local_dir_name(size_t c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "local_%03zu", c);
    return buf;
}

std::string gp_file_name(size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "gp_%04zu.txt", k);
    return buf;
}

}  // namespace

void save_bundle(const SurrogateBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "bundle.manifest");
    if (!os) throw IoError("cannot write bundle manifest");
    os << "format = stsurro-bundle\n";
    os << "kind = " << (bundle.kind == SurrogateKind::linear ? "linear" : "locally_linear")
       << "\n";
    os << "variable = " << variable_name(bundle.variable) << "\n";
    os << "policy.n_max = " << bundle.policy.n_max << "\n";
    os << "policy.rel_std_threshold = " << format_double(bundle.policy.rel_std_threshold) << "\n";
    os << "policy.variance_target = " << format_double(bundle.policy.variance_target) << "\n";
    os << "rule.divisor = " << format_double(bundle.rule.divisor) << "\n";
    os << "rule.base = " << bundle.rule.base << "\n";
    write_grid_geometry(os, bundle.grid);
    write_block_ranges(os, bundle.grid);
    write_columns(os, bundle.descriptors);
    os << "n_locals = " << bundle.locals.size() << "\n";
    for (size_t c = 0; c < bundle.locals.size(); ++c) {
        os << "local." << c << ".columns =";
        for (Index j : bundle.locals[c].columns) os << " " << j;
        os << "\n";
    }
    os.close();
    if (!os) throw IoError("short write of bundle manifest");

    if (bundle.kind == SurrogateKind::locally_linear)
        save_cluster_model(bundle.clusters, dir / "clusters.txt");

    for (size_t c = 0; c < bundle.locals.size(); ++c) {
        const auto& local = bundle.locals[c];
        auto ldir = dir / local_dir_name(c);
        save_basis(local.basis, ldir / "basis");
        write_matrix_file(ldir / "training_weights.bin", local.training_weights);
        for (size_t k = 0; k < local.weight_models.size(); ++k)
            save_gp(local.weight_models[k], ldir / gp_file_name(k));
    }
}

SurrogateBundle load_bundle(const std::filesystem::path& dir) {
    auto kv = read_manifest(dir / "bundle.manifest");
    if (kv["format"] != "stsurro-bundle") throw IoError(dir.string() + " is not a bundle");
    SurrogateBundle bundle;
    bundle.kind =
        kv.at("kind") == "linear" ? SurrogateKind::linear : SurrogateKind::locally_linear;
    bundle.variable = variable_from_name(kv.at("variable"));
    bundle.policy.n_max = std::stoll(kv.at("policy.n_max"));
    bundle.policy.rel_std_threshold = parse_double(kv.at("policy.rel_std_threshold"));
    bundle.policy.variance_target = parse_double(kv.at("policy.variance_target"));
    bundle.rule.divisor = parse_double(kv.at("rule.divisor"));
    bundle.rule.base = std::stoi(kv.at("rule.base"));
    bundle.grid = grid_from_manifest(kv);
    bundle.grid.block_ranges = block_ranges_from_manifest(kv);
    bundle.grid.validate();
    bundle.descriptors = columns_from_manifest(kv);

    size_t n_locals = std::stoull(kv.at("n_locals"));
    for (size_t c = 0; c < n_locals; ++c) {
        LocalSurrogate local;
        std::istringstream is(kv.at("local." + std::to_string(c) + ".columns"));
        Index j;
        while (is >> j) local.columns.push_back(j);
        auto ldir = dir / local_dir_name(c);
        local.basis = load_basis(ldir / "basis");
        local.training_weights = read_matrix_file(ldir / "training_weights.bin");
        for (Index k = 0; k < local.training_weights.rows(); ++k)
            local.weight_models.push_back(load_gp(ldir / gp_file_name(static_cast<size_t>(k))));
        bundle.locals.push_back(std::move(local));
    }
    if (bundle.kind == SurrogateKind::locally_linear)
        bundle.clusters = load_cluster_model(dir / "clusters.txt");
    return bundle;
}

}  // namespace stsurro
