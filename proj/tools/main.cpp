// stsurro: batch CLI for building spatio-temporal surrogates from ensembles
// of 2-D field dumps. Subcommands cover the whole pipeline: sample inputs,
// generate a synthetic ensemble, preprocess raw dumps into a block store,
// cluster snapshots, fit linear / locally-linear surrogates, validate with
// leave-one-out, and predict fields with lineout diagnostics.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "stsurro/clustering.hpp"
#include "stsurro/errors.hpp"
#include "stsurro/gp.hpp"
#include "stsurro/ingest.hpp"
#include "stsurro/manifest.hpp"
#include "stsurro/sampling.hpp"
#include "stsurro/snapshot_store.hpp"
#include "stsurro/surrogate.hpp"
#include "stsurro/svd.hpp"
#include "stsurro/synthetic.hpp"
#include "stsurro/util.hpp"

namespace fs = std::filesystem;
using namespace stsurro;

namespace {

// All data outputs are written to a temporary sibling and renamed into
// place, so interrupted runs never leave partial files behind.
class AtomicPath {
public:
    explicit AtomicPath(fs::path target) : target_(std::move(target)) {
        tmp_ = target_;
        tmp_ += ".tmp";
        fs::remove_all(tmp_);
    }
    ~AtomicPath() {
        if (!committed_) {
            std::error_code ec;
            fs::remove_all(tmp_, ec);
        }
    }
    const fs::path& tmp() const { return tmp_; }
    void commit() {
        fs::remove_all(target_);
        if (target_.has_parent_path()) fs::create_directories(target_.parent_path());
        fs::rename(tmp_, target_);
        committed_ = true;
    }

private:
    fs::path target_, tmp_;
    bool committed_ = false;
};

void write_text_atomic(const fs::path& target, const std::string& content) {
    AtomicPath atomic(target);
    {
        std::ofstream os(atomic.tmp());
        if (!os) throw IoError("cannot write " + target.string());
        os << content;
        if (!os) throw IoError("short write to " + target.string());
    }
    atomic.commit();
}

struct GridFlags {
    double x_min = -32.0, x_max = 0.0, y_min = 0.0, y_max = 16.0, delta = 0.25;
    int blocks = 4;

    void add(CLI::App* cmd) {
        cmd->add_option("--grid", grid_spec,
                        "grid as x_min:x_max:y_min:y_max:delta (default -32:0:0:16:0.25)");
        cmd->add_option("--blocks", blocks, "row-block count K");
    }

    CommonGrid build() {
        if (!grid_spec.empty()) {
            std::istringstream is(grid_spec);
            std::string tok;
            double vals[5];
            for (double& v : vals) {
                if (!std::getline(is, tok, ':')) throw ConfigError("bad --grid value");
                v = parse_double(tok);
            }
            x_min = vals[0], x_max = vals[1], y_min = vals[2], y_max = vals[3], delta = vals[4];
        }
        return make_grid(x_min, x_max, y_min, y_max, delta, blocks);
    }

private:
    std::string grid_spec;
};

std::pair<double, double> parse_range(const std::string& s, const char* what) {
    auto colon = s.find(':', 1);  // skip a leading minus sign
    if (colon == std::string::npos) throw ConfigError(std::string("bad ") + what + " range");
    return {parse_double(s.substr(0, colon)), parse_double(s.substr(colon + 1))};
}

InputBox box_from_flags(const std::string& he, const std::string& tv, const std::string& rad,
                        const std::vector<std::string>& exclusions) {
    InputBox box = default_input_box();
    if (!he.empty()) std::tie(box.axes[0].lo, box.axes[0].hi) = parse_range(he, "he-length");
    if (!tv.empty()) std::tie(box.axes[1].lo, box.axes[1].hi) = parse_range(tv, "tip-velocity");
    if (!rad.empty()) std::tie(box.axes[2].lo, box.axes[2].hi) = parse_range(rad, "radius");
    for (const auto& e : exclusions) {
        // i,j,a,b,c: exclude where a*x_i + b*x_j > c
        std::istringstream is(e);
        std::string tok;
        double vals[5];
        for (double& v : vals) {
            if (!std::getline(is, tok, ',')) throw ConfigError("bad --exclude value '" + e + "'");
            v = parse_double(tok);
        }
        box.exclusions.push_back({static_cast<int>(vals[0]), static_cast<int>(vals[1]), vals[2],
                                  vals[3], vals[4]});
    }
    box.validate();
    return box;
}

Eigen::MatrixXd read_sample_table(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<Eigen::Vector3d> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string key, h, v, r;
        if (!(is >> key >> h >> v >> r)) throw IoError("bad sample line '" + line + "'");
        rows.emplace_back(parse_double(h), parse_double(v), parse_double(r));
    }
    Eigen::MatrixXd pts(static_cast<Index>(rows.size()), 3);
    for (size_t i = 0; i < rows.size(); ++i) pts.row(static_cast<Index>(i)) = rows[i].transpose();
    return pts;
}

std::string sample_table_text(const Eigen::MatrixXd& pts, uint64_t seed, int candidates,
                              const InputBox& box, const std::string& prefix) {
    std::ostringstream os;
    os << "# stsurro sample table\n";
    os << "# seed = " << seed << "\n";
    os << "# candidates = " << candidates << "\n";
    for (const auto& a : box.axes)
        os << "# box " << a.name << " = [" << format_double(a.lo) << ", " << format_double(a.hi)
           << "]\n";
    os << "# key\the_length\ttip_velocity\tradius\n";
    for (Index i = 0; i < pts.rows(); ++i) {
        char key[32];
        std::snprintf(key, sizeof(key), "%s%03ld", prefix.c_str(), static_cast<long>(i));
        os << key << "\t" << format_double(pts(i, 0)) << "\t" << format_double(pts(i, 1)) << "\t"
           << format_double(pts(i, 2)) << "\n";
    }
    return os.str();
}

TimestepRule rule_from_extras(const BlockStore& store) {
    TimestepRule rule;
    for (const auto& [k, v] : store.extras()) {
        if (k == "rule.divisor") rule.divisor = parse_double(v);
        if (k == "rule.base") rule.base = std::stoi(v);
    }
    return rule;
}

int resolve_timestep(const std::string& spec, const TimestepRule& rule, double h, double v) {
    int t_last = rule.n_steps(h, v) - 1;
    if (spec == "tlast") return t_last;
    if (spec.rfind("tlast-", 0) == 0) return t_last - std::stoi(spec.substr(6));
    return std::stoi(spec);
}

// ---------------------------------------------------------------------------
// subcommand: sample

struct SampleArgs {
    int n = 16;
    int candidates = 32;
    uint64_t seed = 0;
    std::string he_range, tv_range, radius_range;
    std::vector<std::string> exclusions;
    std::string extend_file, out_file = "samples.tsv", prefix = "s";
};

void run_sample(const SampleArgs& args) {
    InputBox box =
        box_from_flags(args.he_range, args.tv_range, args.radius_range, args.exclusions);
    Eigen::MatrixXd existing(0, 3);
    if (!args.extend_file.empty()) existing = read_sample_table(args.extend_file);
    Eigen::MatrixXd pts = best_candidate_extend(existing, args.n, args.candidates, box, args.seed);
    write_text_atomic(args.out_file,
                      sample_table_text(pts, args.seed, args.candidates, box, args.prefix));
    std::cerr << "sample: " << pts.rows() << " points (" << existing.rows() << " existing) -> "
              << args.out_file << "\n";
}

// ---------------------------------------------------------------------------
// subcommand: synth

struct SynthArgs {
    std::string out_dir = "raw";
    int members = 45;
    int candidates = 32;
    uint64_t seed = 0;
    double noise = 0.0;
    double divisor = 3.0;
    int base = 8;
    std::string inputs_file;
    GridFlags grid;
};

void run_synth(SynthArgs& args) {
    SyntheticSpec spec = default_synthetic_spec();
    spec.grid = args.grid.build();
    spec.rule = {args.divisor, args.base};
    spec.noise = args.noise;
    spec.seed = args.seed;

    Eigen::MatrixXd inputs;
    if (!args.inputs_file.empty()) {
        inputs = read_sample_table(args.inputs_file);
    } else {
        inputs = best_candidate_extend(Eigen::MatrixXd(0, 3), args.members, args.candidates,
                                       spec.box, args.seed);
    }
    for (Index i = 0; i < inputs.rows(); ++i) {
        char key[32];
        std::snprintf(key, sizeof(key), "m%03ld", static_cast<long>(i));
        spec.members.push_back(make_member(spec, key, inputs(i, 0), inputs(i, 1), inputs(i, 2)));
    }

    AtomicPath atomic(args.out_dir);
    generate_ensemble(spec, atomic.tmp());
    atomic.commit();
    int total = 0;
    for (const auto& m : spec.members) total += m.n_timesteps;
    std::cerr << "synth: " << spec.members.size() << " members, " << total << " snapshots -> "
              << args.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// subcommand: preprocess

struct PreprocessArgs {
    std::string raw_dir, out_dir = "store";
    std::vector<std::string> variables{"mass"};
    double crop_x_min = -32.0;
    GridFlags grid;
    int workers = 0;
};

void run_preprocess(PreprocessArgs& args) {
    CommonGrid grid = args.grid.build();
    EnsembleManifest manifest = read_members_manifest(args.raw_dir);
    int workers = args.workers > 0 ? args.workers : default_workers();

    for (const auto& var_name : args.variables) {
        Variable variable = variable_from_name(var_name);
        AtomicPath atomic(fs::path(args.out_dir) / variable_name(variable));
        BlockStoreWriter writer(atomic.tmp(), grid, variable);
        writer.set_extra("rule.divisor", format_double(manifest.rule.divisor));
        writer.set_extra("rule.base", std::to_string(manifest.rule.base));
        writer.set_extra("crop_x_min", format_double(args.crop_x_min));

        Index n_cols = 0;
        for (const auto& member : manifest.members) {
            // Remap timesteps in parallel, append in deterministic order.
            std::vector<Eigen::VectorXd> columns(static_cast<size_t>(member.n_timesteps));
            std::string error;
            parallel_for(static_cast<size_t>(member.n_timesteps), workers, [&](size_t t) {
                try {
                    auto rows = read_raw_tables(
                        raw_table_files(fs::path(args.raw_dir) / member.key, static_cast<int>(t)));
                    RawField field =
                        field_from_table(rows, variable, member.key, static_cast<int>(t));
                    field = align_and_crop(field, args.crop_x_min);
                    columns[t] = remap_1nn(field, grid);
                } catch (const std::exception& e) {
                    if (error.empty())
                        error = member.key + "/t" + std::to_string(t) + ": " + e.what();
                }
            });
            if (!error.empty()) throw IoError("ingestion failed at " + error);
            for (int t = 0; t < member.n_timesteps; ++t) {
                ColumnDescriptor desc{member.key,       t,             member.he_length,
                                      member.tip_velocity, member.radius, static_cast<double>(t)};
                writer.append_column(desc, columns[static_cast<size_t>(t)]);
                ++n_cols;
            }
        }
        writer.finalize();
        atomic.commit();
        std::cerr << "preprocess: variable=" << variable_name(variable) << " N=" << n_cols
                  << " D=" << grid.size() << " K=" << grid.n_blocks() << "\n";
    }
}

// ---------------------------------------------------------------------------
// subcommand: cluster

struct ClusterArgs {
    std::string store_dir, out_file = "clusters.txt", report_file;
    int k = 0;
    std::string k_range;
    Index proj_dim = 2000;
    double density = 0.0;
    int n_init = 10;
    int n_seeds = 5;
    int proj_seeds = 2;
    uint64_t seed = 0;
};

void run_cluster(const ClusterArgs& args) {
    BlockStore store = BlockStore::open(fs::path(args.store_dir));
    Eigen::MatrixXd points = sparse_random_project(store, args.proj_dim, args.seed, args.density);

    int k = args.k;
    std::string report;
    if (!args.k_range.empty()) {
        auto [lo, hi] = parse_range(args.k_range, "k");
        std::vector<Eigen::MatrixXd> sets{points};
        for (int extra = 1; extra < args.proj_seeds; ++extra)
            sets.push_back(sparse_random_project(
                store, args.proj_dim, mix_seed(args.seed, 1000 + static_cast<uint64_t>(extra)),
                args.density));
        ChooseKResult res =
            choose_k(sets, static_cast<int>(lo), static_cast<int>(hi), args.n_seeds, args.seed);
        k = res.k;
        std::ostringstream os;
        os << "# k stability (mean pairwise ARI across " << sets.size() << " projections x "
           << args.n_seeds << " seeds)\n# k\tmean_ari\n";
        for (const auto& row : res.table) os << row.k << "\t" << format_double(row.mean_ari) << "\n";
        report = os.str();
        std::cerr << "cluster: choose_k selected k=" << k << "\n";
    }
    if (k < 1) throw ConfigError("need --k or --k-range");

    ClusterModel model = kmeans(points, k, args.n_init, args.seed);
    model.projection_seed = args.seed;
    model.projection_dim = args.proj_dim;
    model.projection_density =
        args.density > 0 ? args.density : std::sqrt(static_cast<double>(store.rows()));

    AtomicPath atomic(args.out_file);
    save_cluster_model(model, atomic.tmp());
    atomic.commit();
    if (!args.report_file.empty() && !report.empty()) write_text_atomic(args.report_file, report);
    std::cerr << "cluster: k=" << model.k << " inertia=" << model.inertia << " -> "
              << args.out_file << "\n";
}

// ---------------------------------------------------------------------------
// subcommands: fit-linear / fit-local

struct FitArgs {
    std::string store_dir, out_dir = "bundle", clusters_file;
    Index n_weights = 50;
    double rel_std_threshold = 0.5;
    double variance_target = 90.0;
    int gp_restarts = 8;
    int gp_iters = 100;
    uint64_t seed = 0;
    int workers = 0;
};

void run_fit(const FitArgs& args, bool locally_linear) {
    BlockStore store = BlockStore::open(fs::path(args.store_dir));
    SurrogateOptions opts;
    opts.policy.n_max = args.n_weights;
    opts.policy.rel_std_threshold = args.rel_std_threshold;
    opts.policy.variance_target = args.variance_target;
    opts.gp.restarts = args.gp_restarts;
    opts.gp.max_iters = args.gp_iters;
    opts.gp.seed = args.seed;
    opts.workers = args.workers > 0 ? args.workers : default_workers();

    TimestepRule rule = rule_from_extras(store);
    SurrogateBundle bundle;
    if (locally_linear) {
        if (args.clusters_file.empty()) throw ConfigError("fit-local needs --clusters");
        ClusterModel clusters = load_cluster_model(args.clusters_file);
        bundle = fit_locally_linear(store, store.columns(), store.grid(), rule, store.variable(),
                                    clusters, opts);
    } else {
        bundle = fit_linear(store, store.columns(), store.grid(), rule, store.variable(), opts);
    }

    AtomicPath atomic(args.out_dir);
    save_bundle(bundle, atomic.tmp());
    atomic.commit();
    std::cerr << (locally_linear ? "fit-local" : "fit-linear") << ": " << bundle.locals.size()
              << " basis set(s), " << bundle.n_models() << " weight models each -> "
              << args.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// subcommand: loo

struct LooArgs {
    std::string bundle_dir, out_dir = "loo";
    Index n_weights = 0;  // 0: all modeled
};

void run_loo(const LooArgs& args) {
    SurrogateBundle bundle = load_bundle(args.bundle_dir);
    std::ostringstream points, summary;
    points << "# leave-one-out weight validation\n";
    points << "# local\tweight\tpoint\tactual\tpredicted\tstd\n";
    summary << "# local\tweight\tslope\tintercept\tr2\n";

    for (size_t c = 0; c < bundle.locals.size(); ++c) {
        const auto& local = bundle.locals[c];
        Index n = static_cast<Index>(local.weight_models.size());
        if (args.n_weights > 0) n = std::min(n, args.n_weights);
        for (Index k = 0; k < n; ++k) {
            LooResult loo = loo_from_model(local.weight_models[static_cast<size_t>(k)]);
            for (size_t i = 0; i < loo.points.size(); ++i) {
                const auto& p = loo.points[i];
                points << c << "\t" << k << "\t" << i << "\t" << format_double(p.actual) << "\t"
                       << format_double(p.predicted) << "\t" << format_double(p.std) << "\n";
            }
            summary << c << "\t" << k << "\t" << format_double(loo.slope) << "\t"
                    << format_double(loo.intercept) << "\t" << format_double(loo.r2) << "\n";
        }
    }
    AtomicPath atomic(args.out_dir);
    fs::create_directories(atomic.tmp());
    {
        std::ofstream p(atomic.tmp() / "loo_points.tsv"), s(atomic.tmp() / "loo_summary.tsv");
        p << points.str();
        s << summary.str();
        if (!p || !s) throw IoError("short write of LOO tables");
    }
    atomic.commit();
    std::cerr << "loo: wrote " << args.out_dir << "/loo_points.tsv and loo_summary.tsv\n";
}

// ---------------------------------------------------------------------------
// subcommand: predict

struct PredictArgs {
    std::string bundle_dir, out_dir = "prediction";
    std::string at;  // h,v,r
    std::vector<std::string> t_specs;
    Index n_weights = 0;  // 0: policy-selected
    double lineout_y = 6.0063;
    std::string lineout_x = "-15.5:-10.5";
    double edge_threshold = 0.5;
};

void run_predict(const PredictArgs& args) {
    SurrogateBundle bundle = load_bundle(args.bundle_dir);
    std::istringstream is(args.at);
    std::string tok;
    double hvr[3];
    for (double& v : hvr) {
        if (!std::getline(is, tok, ',')) throw ConfigError("--at expects h,v,r");
        v = parse_double(tok);
    }
    auto [x0, x1] = parse_range(args.lineout_x, "lineout-x");
    std::vector<std::string> t_specs = args.t_specs;
    if (t_specs.empty()) t_specs = {"tlast", "tlast-2"};

    AtomicPath atomic(args.out_dir);
    fs::create_directories(atomic.tmp());
    for (const auto& t_spec : t_specs) {
        int t = resolve_timestep(t_spec, bundle.rule, hvr[0], hvr[1]);
        FieldPrediction pred =
            predict_field(bundle, hvr[0], hvr[1], hvr[2], static_cast<double>(t), args.n_weights);
        char stem[32];
        std::snprintf(stem, sizeof(stem), "t%04d", t);

        ColumnDescriptor desc{"predicted", t, hvr[0], hvr[1], hvr[2], static_cast<double>(t)};
        BlockStoreWriter writer(atomic.tmp() / (std::string(stem) + "_field"), bundle.grid,
                                bundle.variable);
        writer.append_column(desc, pred.field);
        writer.finalize();

        std::ostringstream wos;
        wos << "# weight predictions at h=" << format_double(hvr[0])
            << " v=" << format_double(hvr[1]) << " r=" << format_double(hvr[2]) << " t=" << t
            << "\n";
        wos << "# cluster = " << pred.cluster << "\n";
        wos << "# n_used = " << pred.n_used << "\n";
        for (const auto& w : pred.warnings) wos << "# warning: " << w << "\n";
        wos << "# weight\tmean\tstd\ttrain_scale\n";
        for (size_t k = 0; k < pred.weights.size(); ++k)
            wos << k << "\t" << format_double(pred.weights[k].mean) << "\t"
                << format_double(pred.weights[k].std) << "\t"
                << format_double(pred.weights[k].train_scale) << "\n";
        std::ofstream wf(atomic.tmp() / (std::string(stem) + "_weights.tsv"));
        wf << wos.str();

        auto line = lineout(pred.field, bundle.grid, args.lineout_y, {x0, x1});
        auto edge = locate_plate_edge(line, args.edge_threshold);
        std::ostringstream los;
        los << "# lineout at y = " << format_double(args.lineout_y) << "\n";
        los << "# plate_edge = " << (edge ? format_double(*edge) : "none") << "\n";
        los << "# x\tvalue\n";
        for (auto [x, v] : line) los << format_double(x) << "\t" << format_double(v) << "\n";
        std::ofstream lf(atomic.tmp() / (std::string(stem) + "_lineout.tsv"));
        lf << los.str();
        if (!wf || !lf) throw IoError("short write of prediction tables");

        std::cerr << "predict: t=" << t << " cluster=" << pred.cluster
                  << " n_used=" << pred.n_used
                  << " edge=" << (edge ? format_double(*edge) : "none") << "\n";
    }
    atomic.commit();
}

// ---------------------------------------------------------------------------
// subcommand: lineout

struct LineoutArgs {
    std::string field_dir, out_file = "lineout.tsv";
    Index column = 0;
    double y = 6.0063;
    std::string x_range = "-15.5:-10.5";
    double edge_threshold = 0.5;
};

void run_lineout(const LineoutArgs& args) {
    BlockStore store = BlockStore::open(fs::path(args.field_dir));
    Eigen::VectorXd field = store.read_column(args.column);
    auto [x0, x1] = parse_range(args.x_range, "x");
    auto line = lineout(field, store.grid(), args.y, {x0, x1});
    auto edge = locate_plate_edge(line, args.edge_threshold);

    std::ostringstream os;
    os << "# lineout at y = " << format_double(args.y) << "\n";
    os << "# plate_edge = " << (edge ? format_double(*edge) : "none") << "\n";
    os << "# x\tvalue\n";
    for (auto [x, v] : line) os << format_double(x) << "\t" << format_double(v) << "\n";
    write_text_atomic(args.out_file, os.str());
    std::cerr << "lineout: " << line.size() << " samples, edge="
              << (edge ? format_double(*edge) : "none") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatio-temporal surrogates for simulation ensembles"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value config file; flags override");

    SampleArgs sample_args;
    auto* sample = app.add_subcommand("sample", "progressive best-candidate input sampling");
    sample->add_option("--n", sample_args.n, "points to add");
    sample->add_option("--candidates", sample_args.candidates, "candidates per accepted point");
    sample->add_option("--seed", sample_args.seed, "rng seed");
    sample->add_option("--he-range", sample_args.he_range, "HE length range lo:hi");
    sample->add_option("--tv-range", sample_args.tv_range, "tip velocity range lo:hi");
    sample->add_option("--radius-range", sample_args.radius_range, "jet radius range lo:hi");
    sample->add_option("--exclude", sample_args.exclusions,
                       "half-plane exclusion i,j,a,b,c: drop points with a*x_i+b*x_j > c");
    sample->add_option("--extend", sample_args.extend_file, "existing sample table to extend");
    sample->add_option("--out", sample_args.out_file, "output table");
    sample->add_option("--key-prefix", sample_args.prefix, "sample key prefix");
    sample->callback([&] { run_sample(sample_args); });

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate a synthetic raw ensemble");
    synth->add_option("--out", synth_args.out_dir, "raw dump directory");
    synth->add_option("--members", synth_args.members, "ensemble size");
    synth->add_option("--candidates", synth_args.candidates, "best-candidate draws per point");
    synth->add_option("--seed", synth_args.seed, "rng seed");
    synth->add_option("--noise", synth_args.noise, "additive noise amplitude");
    synth->add_option("--rule-divisor", synth_args.divisor, "timestep rule divisor");
    synth->add_option("--rule-base", synth_args.base, "timestep rule base count");
    synth->add_option("--inputs", synth_args.inputs_file, "sample table instead of sampling");
    synth_args.grid.add(synth);
    synth->callback([&] { run_synth(synth_args); });

    PreprocessArgs pre_args;
    auto* pre = app.add_subcommand("preprocess", "align, crop, remap and assemble block stores");
    pre->add_option("--raw", pre_args.raw_dir, "raw dump directory")->required();
    pre->add_option("--out", pre_args.out_dir, "store output directory");
    pre->add_option("--variable", pre_args.variables,
                    "variables to process (mass, x_momentum, y_momentum)");
    pre->add_option("--crop-xmin", pre_args.crop_x_min, "crop bound after alignment");
    pre->add_option("--workers", pre_args.workers, "worker threads (0 = all cores)");
    pre_args.grid.add(pre);
    pre->callback([&] { run_preprocess(pre_args); });

    ClusterArgs cluster_args;
    auto* cluster = app.add_subcommand("cluster", "sparse-project and k-means the snapshots");
    cluster->add_option("--store", cluster_args.store_dir, "block store directory")->required();
    cluster->add_option("--out", cluster_args.out_file, "cluster model file");
    cluster->add_option("--report", cluster_args.report_file, "stability report file");
    cluster->add_option("--k", cluster_args.k, "cluster count");
    cluster->add_option("--k-range", cluster_args.k_range, "stability scan range lo:hi");
    cluster->add_option("--proj-dim", cluster_args.proj_dim, "projection dimension");
    cluster->add_option("--density", cluster_args.density, "projection density s (0 = sqrt(D))");
    cluster->add_option("--n-init", cluster_args.n_init, "k-means restarts");
    cluster->add_option("--n-seeds", cluster_args.n_seeds, "k-means seeds per stability run");
    cluster->add_option("--proj-seeds", cluster_args.proj_seeds, "projection seeds for stability");
    cluster->add_option("--seed", cluster_args.seed, "rng seed");
    cluster->callback([&] { run_cluster(cluster_args); });

    FitArgs fit_args;
    auto* fit_linear_cmd = app.add_subcommand("fit-linear", "fit the linear surrogate");
    auto* fit_local_cmd = app.add_subcommand("fit-local", "fit the locally-linear surrogate");
    for (auto* cmd : {fit_linear_cmd, fit_local_cmd}) {
        cmd->add_option("--store", fit_args.store_dir, "block store directory")->required();
        cmd->add_option("--out", fit_args.out_dir, "bundle output directory");
        cmd->add_option("--n-weights", fit_args.n_weights, "weight model cap");
        cmd->add_option("--rel-std-threshold", fit_args.rel_std_threshold,
                        "predictive-std acceptance threshold");
        cmd->add_option("--variance-target", fit_args.variance_target,
                        "cumulative variance target in percent");
        cmd->add_option("--gp-restarts", fit_args.gp_restarts, "GP optimizer restarts");
        cmd->add_option("--gp-iters", fit_args.gp_iters, "GP optimizer iteration cap");
        cmd->add_option("--seed", fit_args.seed, "rng seed");
        cmd->add_option("--workers", fit_args.workers, "worker threads (0 = all cores)");
    }
    fit_local_cmd->add_option("--clusters", fit_args.clusters_file, "cluster model file");
    fit_linear_cmd->callback([&] { run_fit(fit_args, false); });
    fit_local_cmd->callback([&] { run_fit(fit_args, true); });

    LooArgs loo_args;
    auto* loo = app.add_subcommand("loo", "leave-one-out validation of the weight models");
    loo->add_option("--bundle", loo_args.bundle_dir, "bundle directory")->required();
    loo->add_option("--out", loo_args.out_dir, "output directory");
    loo->add_option("--weights", loo_args.n_weights, "validate only the first n weights");
    loo->callback([&] { run_loo(loo_args); });

    PredictArgs predict_args;
    auto* predict = app.add_subcommand("predict", "reconstruct fields at new inputs");
    predict->add_option("--bundle", predict_args.bundle_dir, "bundle directory")->required();
    predict->add_option("--at", predict_args.at, "query point h,v,r")->required();
    predict->add_option("--t", predict_args.t_specs,
                        "timesteps: integers, tlast, or tlast-k (default tlast and tlast-2)");
    predict->add_option("--n-weights", predict_args.n_weights,
                        "weights for reconstruction (0 = policy-selected)");
    predict->add_option("--out", predict_args.out_dir, "output directory");
    predict->add_option("--lineout-y", predict_args.lineout_y, "lineout y location");
    predict->add_option("--lineout-x", predict_args.lineout_x, "lineout x range lo:hi");
    predict->add_option("--edge-threshold", predict_args.edge_threshold,
                        "plate-edge threshold fraction");
    predict->callback([&] { run_predict(predict_args); });

    LineoutArgs lineout_args;
    auto* line = app.add_subcommand("lineout", "slice a stored field at fixed y");
    line->add_option("--field", lineout_args.field_dir, "field store directory")->required();
    line->add_option("--column", lineout_args.column, "column index");
    line->add_option("--y", lineout_args.y, "y location");
    line->add_option("--x-range", lineout_args.x_range, "x range lo:hi");
    line->add_option("--edge-threshold", lineout_args.edge_threshold,
                     "plate-edge threshold fraction");
    line->add_option("--out", lineout_args.out_file, "output table");
    line->callback([&] { run_lineout(lineout_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: Unhandled: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
