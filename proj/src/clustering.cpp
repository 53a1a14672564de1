#include "stsurro/clustering.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "stsurro/errors.hpp"
#include "stsurro/manifest.hpp"
#include "stsurro/util.hpp"

namespace stsurro {

namespace {

double next_uniform(uint64_t& state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

}  // namespace

Eigen::MatrixXd sparse_random_project(const BlockMatrixSource& x, Index d, uint64_t seed,
                                      double density_s) {
    if (d < 1) throw InvalidDimensionError("projection dimension must be >= 1");
    const Index big_d = x.rows();
    double s = density_s > 0 ? density_s : std::sqrt(static_cast<double>(big_d));
    if (s < 1) s = 1;
    const double value = std::sqrt(s) / std::sqrt(static_cast<double>(d));
    const double p_nonzero = 1.0 / s;
    const double p_plus = 0.5 / s;

    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.cols(), d);
    Index offset = 0;
    std::vector<std::pair<Index, double>> nonzeros;
    for (int k = 0; k < x.n_blocks(); ++k) {
        Eigen::MatrixXd b = x.block(k);
        for (Index r = 0; r < b.rows(); ++r) {
            // One projector row per snapshot-matrix row, regenerated on the
            // fly from (seed, global row index).
            uint64_t state = mix_seed(seed, static_cast<uint64_t>(offset + r));
            nonzeros.clear();
            for (Index j = 0; j < d; ++j) {
                double u = next_uniform(state);
                if (u < p_plus)
                    nonzeros.emplace_back(j, value);
                else if (u < p_nonzero)
                    nonzeros.emplace_back(j, -value);
            }
            for (const auto& [j, v] : nonzeros) out.col(j) += v * b.row(r).transpose();
        }
        offset += b.rows();
    }
    return out;
}

std::vector<Index> ClusterModel::cluster_members(int cluster) const {
    std::vector<Index> out;
    for (size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] == cluster) out.push_back(static_cast<Index>(i));
    return out;
}

namespace {

std::vector<int> nearest_assignments(const Eigen::MatrixXd& points,
                                     const Eigen::MatrixXd& centroids) {
    std::vector<int> assign(static_cast<size_t>(points.rows()));
    for (Index i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (Index c = 0; c < centroids.rows(); ++c) {
            double d2 = (points.row(i) - centroids.row(c)).squaredNorm();
            if (d2 < best) {
                best = d2;
                arg = static_cast<int>(c);
            }
        }
        assign[static_cast<size_t>(i)] = arg;
    }
    return assign;
}

Eigen::MatrixXd kmeanspp_seed(const Eigen::MatrixXd& points, int k, uint64_t& state) {
    const Index n = points.rows();
    Eigen::MatrixXd centroids(k, points.cols());
    Index first = static_cast<Index>(splitmix64(state) % static_cast<uint64_t>(n));
    centroids.row(0) = points.row(first);
    Eigen::VectorXd d2 = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        double total = d2.sum();
        Index pick;
        if (total <= 0) {
            pick = static_cast<Index>(splitmix64(state) % static_cast<uint64_t>(n));
        } else {
            double target = next_uniform(state) * total;
            double acc = 0;
            pick = n - 1;
            for (Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.row(c) = points.row(pick);
        d2 = d2.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }
    return centroids;
}

struct LloydResult {
    std::vector<int> assign;
    Eigen::MatrixXd centroids;
    double inertia = 0;
};

LloydResult lloyd(const Eigen::MatrixXd& points, int k, uint64_t seed,
                  std::vector<double>* inertia_trace) {
    const Index n = points.rows();
    uint64_t state = seed;
    Eigen::MatrixXd centroids = kmeanspp_seed(points, k, state);
    std::vector<int> assign = nearest_assignments(points, centroids);

    double prev_inertia = std::numeric_limits<double>::infinity();
    double inertia = prev_inertia;
    constexpr int kMaxIters = 300;
    for (int iter = 0; iter < kMaxIters; ++iter) {
        // Means of current members; empty clusters keep their old centroid
        // until repaired below.
        std::vector<Index> counts(static_cast<size_t>(k), 0);
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
        for (Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<size_t>(i)]) += points.row(i);
            ++counts[static_cast<size_t>(assign[static_cast<size_t>(i)])];
        }
        for (int c = 0; c < k; ++c)
            if (counts[static_cast<size_t>(c)] > 0)
                centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<size_t>(c)]);

        // Re-seed each empty cluster at the farthest member of the largest
        // cluster and hand that point over.
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) continue;
            int donor = 0;
            for (int c2 = 1; c2 < k; ++c2)
                if (counts[static_cast<size_t>(c2)] > counts[static_cast<size_t>(donor)]) donor = c2;
            if (counts[static_cast<size_t>(donor)] <= 1) continue;
            Index far = -1;
            double far_d2 = -1;
            for (Index i = 0; i < n; ++i) {
                if (assign[static_cast<size_t>(i)] != donor) continue;
                double d2 = (points.row(i) - centroids.row(donor)).squaredNorm();
                if (d2 > far_d2) {
                    far_d2 = d2;
                    far = i;
                }
            }
            centroids.row(c) = points.row(far);
            assign[static_cast<size_t>(far)] = c;
            --counts[static_cast<size_t>(donor)];
            ++counts[static_cast<size_t>(c)];
        }

        std::vector<int> next = nearest_assignments(points, centroids);
        inertia = 0;
        for (Index i = 0; i < n; ++i)
            inertia += (points.row(i) - centroids.row(next[static_cast<size_t>(i)])).squaredNorm();
        if (inertia_trace) inertia_trace->push_back(inertia);
        assert(inertia <= prev_inertia * (1 + 1e-9) + 1e-12);
        prev_inertia = inertia;
        if (next == assign) break;
        assign = std::move(next);
    }
    return {std::move(assign), std::move(centroids), inertia};
}

}  // namespace

ClusterModel kmeans(const Eigen::MatrixXd& points, int k, int n_init, uint64_t seed) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (static_cast<Index>(k) > points.rows())
        throw KExceedsNError("k = " + std::to_string(k) + " exceeds " +
                             std::to_string(points.rows()) + " points");
    if (n_init < 1) throw ConfigError("n_init must be >= 1");

    LloydResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int run = 0; run < n_init; ++run) {
        LloydResult r = lloyd(points, k, mix_seed(seed, static_cast<uint64_t>(run)), nullptr);
        if (r.inertia < best.inertia) best = std::move(r);
    }

    ClusterModel model;
    model.k = k;
    model.assignments = std::move(best.assign);
    model.centroids = std::move(best.centroids);
    model.inertia = best.inertia;
    return model;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw DimensionMismatchError("label vectors differ in length");
    if (a.empty()) throw TooFewPointsError("ARI of empty labelings");
    int ka = 1 + *std::max_element(a.begin(), a.end());
    int kb = 1 + *std::max_element(b.begin(), b.end());
    Eigen::MatrixXd table = Eigen::MatrixXd::Zero(ka, kb);
    for (size_t i = 0; i < a.size(); ++i) table(a[i], b[i]) += 1;

    auto choose2 = [](double m) { return m * (m - 1) / 2; };
    double index = 0;
    for (Index i = 0; i < table.rows(); ++i)
        for (Index j = 0; j < table.cols(); ++j) index += choose2(table(i, j));
    double row_sum = 0, col_sum = 0;
    for (Index i = 0; i < table.rows(); ++i) row_sum += choose2(table.row(i).sum());
    for (Index j = 0; j < table.cols(); ++j) col_sum += choose2(table.col(j).sum());
    double all_pairs = choose2(static_cast<double>(a.size()));
    double expected = row_sum * col_sum / all_pairs;
    double max_index = 0.5 * (row_sum + col_sum);
    double den = max_index - expected;
    if (std::abs(den) < 1e-12) return std::abs(index - expected) < 1e-12 ? 1.0 : 0.0;
    return (index - expected) / den;
}

ChooseKResult choose_k(const std::vector<Eigen::MatrixXd>& point_sets, int k_lo, int k_hi,
                       int n_seeds, uint64_t seed) {
    if (point_sets.empty()) throw ConfigError("choose_k needs at least one point set");
    if (k_lo < 1 || k_hi < k_lo) throw ConfigError("bad k range");
    if (n_seeds < 2 && point_sets.size() < 2)
        throw ConfigError("stability needs at least two runs per k");

    ChooseKResult result;
    for (int k = k_lo; k <= k_hi; ++k) {
        std::vector<std::vector<int>> labelings;
        uint64_t salt = 0;
        for (const auto& pts : point_sets)
            for (int s = 0; s < n_seeds; ++s)
                labelings.push_back(
                    kmeans(pts, k, 1, mix_seed(seed, (static_cast<uint64_t>(k) << 32) | salt++))
                        .assignments);
        double sum = 0;
        int pairs = 0;
        for (size_t i = 0; i < labelings.size(); ++i)
            for (size_t j = i + 1; j < labelings.size(); ++j) {
                sum += adjusted_rand_index(labelings[i], labelings[j]);
                ++pairs;
            }
        result.table.push_back({k, pairs > 0 ? sum / pairs : 1.0});
    }

    // Smallest k that is stable and strictly more stable than k+1; flat
    // profiles fall back to the low end of the range.
    result.k = k_lo;
    for (size_t i = 0; i + 1 < result.table.size(); ++i) {
        if (result.table[i].mean_ari >= 0.9 &&
            result.table[i].mean_ari > result.table[i + 1].mean_ari) {
            result.k = result.table[i].k;
            return result;
        }
    }
    return result;
}

ChooseKResult choose_k(const Eigen::MatrixXd& points, int k_lo, int k_hi, int n_seeds,
                       uint64_t seed) {
    return choose_k(std::vector<Eigen::MatrixXd>{points}, k_lo, k_hi, n_seeds, seed);
}

int assign_query_cluster(const ClusterModel& model, const std::vector<ColumnDescriptor>& training,
                         double h, double v, double r, double t, double query_t_last) {
    if (model.assignments.empty() || training.empty())
        throw EmptyModelError("cluster model has no training assignments");
    if (model.assignments.size() != training.size())
        throw DimensionMismatchError("descriptor count does not match cluster assignments");

    // Per-simulation last timestep, for the t/t_last coordinate.
    std::map<std::string, double> t_last;
    for (const auto& c : training) {
        auto [it, fresh] = t_last.try_emplace(c.sim_key, c.time);
        if (!fresh) it->second = std::max(it->second, c.time);
    }
    double h_lo = training[0].he_length, h_hi = h_lo;
    double v_lo = training[0].tip_velocity, v_hi = v_lo;
    double r_lo = training[0].radius, r_hi = r_lo;
    for (const auto& c : training) {
        h_lo = std::min(h_lo, c.he_length), h_hi = std::max(h_hi, c.he_length);
        v_lo = std::min(v_lo, c.tip_velocity), v_hi = std::max(v_hi, c.tip_velocity);
        r_lo = std::min(r_lo, c.radius), r_hi = std::max(r_hi, c.radius);
    }
    auto norm = [](double x, double lo, double hi) { return hi > lo ? (x - lo) / (hi - lo) : 0.0; };
    auto coords = [&](double hh, double vv, double rr, double tt, double tl) {
        return Eigen::Vector4d(norm(hh, h_lo, h_hi), norm(vv, v_lo, v_hi), norm(rr, r_lo, r_hi),
                               tl > 0 ? tt / tl : 0.0);
    };

    Eigen::Vector4d q = coords(h, v, r, t, query_t_last);
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (size_t i = 0; i < training.size(); ++i) {
        const auto& c = training[i];
        double d2 =
            (coords(c.he_length, c.tip_velocity, c.radius, c.time, t_last[c.sim_key]) - q)
                .squaredNorm();
        if (d2 < best) {
            best = d2;
            arg = static_cast<int>(i);
        }
    }
    return model.assignments[static_cast<size_t>(arg)];
}

void save_cluster_model(const ClusterModel& model, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write cluster model " + path.string());
    os << "format = stsurro-cluster-model\n";
    os << "k = " << model.k << "\n";
    os << "inertia = " << format_double(model.inertia) << "\n";
    os << "projection.seed = " << model.projection_seed << "\n";
    os << "projection.dim = " << model.projection_dim << "\n";
    os << "projection.density = " << format_double(model.projection_density) << "\n";
    os << "n_points = " << model.assignments.size() << "\n";
    os << "assignments =";
    for (int a : model.assignments) os << " " << a;
    os << "\n";
    for (Index c = 0; c < model.centroids.rows(); ++c) {
        os << "centroid." << c << " =";
        for (Index j = 0; j < model.centroids.cols(); ++j)
            os << " " << format_double(model.centroids(c, j));
        os << "\n";
    }
    if (!os) throw IoError("short write of cluster model");
}

ClusterModel load_cluster_model(const std::filesystem::path& path) {
    auto kv = read_manifest(path);
    if (kv["format"] != "stsurro-cluster-model")
        throw IoError(path.string() + " is not a cluster model");
    ClusterModel m;
    m.k = std::stoi(kv.at("k"));
    m.inertia = parse_double(kv.at("inertia"));
    m.projection_seed = std::stoull(kv.at("projection.seed"));
    m.projection_dim = std::stoll(kv.at("projection.dim"));
    m.projection_density = parse_double(kv.at("projection.density"));
    size_t n = std::stoull(kv.at("n_points"));
    std::istringstream as(kv.at("assignments"));
    int a;
    while (as >> a) m.assignments.push_back(a);
    if (m.assignments.size() != n) throw IoError("cluster model assignment count mismatch");
    std::vector<Eigen::VectorXd> rows;
    for (int c = 0;; ++c) {
        auto it = kv.find("centroid." + std::to_string(c));
        if (it == kv.end()) break;
        std::istringstream cs(it->second);
        std::vector<double> vals;
        std::string tok;
        while (cs >> tok) vals.push_back(parse_double(tok));
        rows.push_back(Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Index>(vals.size())));
    }
    if (!rows.empty()) {
        m.centroids.resize(static_cast<Index>(rows.size()), rows[0].size());
        for (size_t c = 0; c < rows.size(); ++c) m.centroids.row(static_cast<Index>(c)) = rows[c];
    }
    return m;
}

}  // namespace stsurro
