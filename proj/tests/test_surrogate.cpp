#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "stsurro/errors.hpp"
#include "stsurro/sampling.hpp"
#include "stsurro/surrogate.hpp"
#include "stsurro/synthetic.hpp"

using namespace stsurro;

namespace {

struct Ensemble {
    SyntheticSpec spec;
    InMemoryBlockMatrix matrix{std::vector<Eigen::MatrixXd>{Eigen::MatrixXd::Zero(1, 1)}};
    std::vector<ColumnDescriptor> descriptors;
};

// Small in-memory training ensemble straight from the recipe's ground truth.
Ensemble make_ensemble(int n_members, uint64_t seed) {
    Ensemble e;
    e.spec = default_synthetic_spec();
    InputBox box = default_input_box();
    Eigen::MatrixXd inputs = best_candidate_extend(Eigen::MatrixXd(0, 3), n_members, 8, box, seed);

    std::vector<Eigen::VectorXd> snaps;
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
        double h = inputs(i, 0), v = inputs(i, 1), r = inputs(i, 2);
        int steps = e.spec.rule.n_steps(h, v);
        for (int t = 0; t < steps; ++t) {
            snaps.push_back(synthetic_truth(e.spec, h, v, r, t, Variable::mass));
            ColumnDescriptor c;
            c.sim_key = "m" + std::to_string(i);
            c.timestep = t;
            c.he_length = h;
            c.tip_velocity = v;
            c.radius = r;
            c.time = t;
            e.descriptors.push_back(c);
        }
    }
    Eigen::MatrixXd x(e.spec.grid.size(), static_cast<Index>(snaps.size()));
    for (size_t j = 0; j < snaps.size(); ++j) x.col(static_cast<Index>(j)) = snaps[j];
    e.matrix = split_rows(x, e.spec.grid.n_blocks());
    return e;
}

SurrogateOptions quick_options(Index n_max) {
    SurrogateOptions opts;
    opts.policy.n_max = n_max;
    opts.gp.restarts = 2;
    opts.gp.max_iters = 50;
    opts.gp.seed = 11;
    opts.workers = 2;
    return opts;
}

}  // namespace

TEST_CASE("select_n_weights follows the uncertainty rule") {
    WeightSelectionPolicy policy;
    policy.n_max = 8;
    policy.rel_std_threshold = 0.5;
    policy.variance_target = 90.0;
    Eigen::VectorXd sigma(4);
    sigma << 10, 5, 2, 1;

    // All stds zero: the cap wins.
    std::vector<IndexPrediction> preds(4, {1.0, 0.0, 1.0});
    CHECK(select_n_weights(preds, sigma, policy).n == 4);

    // A large std at index 2 stops the scan there.
    preds = {{1, 0, 1}, {1, 0, 1}, {1, 10, 1}, {1, 0, 1}};
    WeightSelection sel = select_n_weights(preds, sigma, policy);
    CHECK(sel.n == 2);

    // sigma = (10,5,2,1): 90% needs 2 values (100*125/130 = 96%); so the
    // uncertainty-limited 2 matches the variance rank and nobody warns.
    CHECK(sel.variance_rank == 2);
    CHECK(!sel.conflict);

    // Tighter variance target than the uncertainty allows: warn.
    policy.variance_target = 99.0;
    sel = select_n_weights(preds, sigma, policy);
    CHECK(sel.n == 2);
    CHECK(sel.variance_rank == 3);
    CHECK(sel.conflict);
    CHECK(!sel.warning.empty());
}

TEST_CASE("select_n_weights is monotone in the threshold") {
    WeightSelectionPolicy policy;
    policy.n_max = 6;
    Eigen::VectorXd sigma(6);
    sigma << 6, 5, 4, 3, 2, 1;
    std::vector<IndexPrediction> preds = {{1, 0.1, 1}, {1, 0.3, 1}, {1, 0.5, 1},
                                          {1, 0.7, 1}, {1, 0.9, 1}, {1, 1.1, 1}};
    Index prev = 0;
    for (double thr : {0.05, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2}) {
        policy.rel_std_threshold = thr;
        Index n = select_n_weights(preds, sigma, policy).n;
        CHECK(n >= prev);
        prev = n;
    }
}

TEST_CASE("a two-snapshot ensemble reconstructs exactly") {
    Ensemble e = make_ensemble(1, 21);
    // Restrict to the first two snapshots.
    Eigen::MatrixXd x(e.matrix.rows(), 2);
    x.col(0) = e.matrix.block(0).col(0), x.col(1) = e.matrix.block(0).col(1);
    std::vector<Eigen::MatrixXd> blocks;
    Index at = 0;
    for (int k = 0; k < e.matrix.n_blocks(); ++k) {
        Eigen::MatrixXd b = e.matrix.block(k);
        blocks.push_back(b.leftCols(2));
        at += b.rows();
    }
    InMemoryBlockMatrix two(blocks);
    std::vector<ColumnDescriptor> descs(e.descriptors.begin(), e.descriptors.begin() + 2);

    SurrogateBundle bundle = fit_linear(two, descs, e.spec.grid, e.spec.rule, Variable::mass,
                                        quick_options(8));
    CHECK(bundle.n_models() == 2);
    CHECK(bundle.locals[0].basis.sigma.size() == 2);

    // Full-rank reconstruction of the training columns through the weights.
    const auto& local = bundle.locals[0];
    for (Index j = 0; j < 2; ++j) {
        Eigen::VectorXd col = two.block(0).col(j);
        for (int k = 1; k < two.n_blocks(); ++k) {
            Eigen::VectorXd longer(col.size() + two.block_rows(k));
            longer << col, two.block(k).col(j);
            col = longer;
        }
        Eigen::VectorXd back = reconstruct(local.basis, local.training_weights.col(j), 2);
        CHECK((back - col).norm() <= 1e-10 * col.norm());
    }
}

TEST_CASE("training snapshots reconstruct to machine precision at full rank") {
    Ensemble e = make_ensemble(4, 31);
    SurrogateBundle bundle = fit_linear(e.matrix, e.descriptors, e.spec.grid, e.spec.rule,
                                        Variable::mass, quick_options(10));
    const SvdBasis& basis = bundle.locals[0].basis;
    CHECK(orthonormality_error(basis) < 1e-8);
    for (Index j = 0; j < e.matrix.cols(); j += 7) {
        Eigen::VectorXd col(e.matrix.rows());
        Index at = 0;
        for (int k = 0; k < e.matrix.n_blocks(); ++k) {
            col.segment(at, e.matrix.block_rows(k)) = e.matrix.block(k).col(j);
            at += e.matrix.block_rows(k);
        }
        Eigen::VectorXd back = reconstruct(basis, project(basis, col).w, basis.effective_rank);
        CHECK((back - col).norm() <= 1e-6 * col.norm());
    }
}

TEST_CASE("locally-linear with one cluster reproduces the linear surrogate") {
    Ensemble e = make_ensemble(3, 41);
    SurrogateOptions opts = quick_options(6);

    ClusterModel one;
    one.k = 1;
    one.assignments.assign(e.descriptors.size(), 0);

    SurrogateBundle lin = fit_linear(e.matrix, e.descriptors, e.spec.grid, e.spec.rule,
                                     Variable::mass, opts);
    SurrogateBundle loc = fit_locally_linear(e.matrix, e.descriptors, e.spec.grid, e.spec.rule,
                                             Variable::mass, one, opts);

    REQUIRE(loc.locals.size() == 1);
    const auto& a = lin.locals[0];
    const auto& b = loc.locals[0];
    CHECK((a.basis.sigma - b.basis.sigma).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(a.training_weights == b.training_weights);  // identical GP training data
    REQUIRE(a.weight_models.size() == b.weight_models.size());
    for (size_t k = 0; k < a.weight_models.size(); ++k) {
        CHECK(a.weight_models[k].length_scales() == b.weight_models[k].length_scales());
        CHECK(a.weight_models[k].training_hash() == b.weight_models[k].training_hash());
    }
}

TEST_CASE("clusters below three snapshots are rejected") {
    Ensemble e = make_ensemble(2, 51);
    ClusterModel bad;
    bad.k = 2;
    bad.assignments.assign(e.descriptors.size(), 0);
    bad.assignments[3] = 1;  // a singleton cluster
    CHECK_THROWS_AS(fit_locally_linear(e.matrix, e.descriptors, e.spec.grid, e.spec.rule,
                                       Variable::mass, bad, quick_options(4)),
                    ClusterTooSmallError);
}

TEST_CASE("per-cluster bases need fewer weights on a two-regime ensemble") {
    // Two regimes with disjoint spatial support: global rank is the sum,
    // per-cluster rank is each part's own.
    std::mt19937_64 rng(61);
    std::normal_distribution<double> gauss;
    const Index d = 200, per = 24, rank = 6;
    Eigen::MatrixXd basis_a = Eigen::MatrixXd::Zero(d, rank);
    Eigen::MatrixXd basis_b = Eigen::MatrixXd::Zero(d, rank);
    for (Index i = 0; i < d / 2; ++i)
        for (Index k = 0; k < rank; ++k) {
            basis_a(i, k) = gauss(rng);
            basis_b(d / 2 + i, k) = gauss(rng);
        }
    Eigen::MatrixXd x(d, 2 * per);
    ClusterModel clusters;
    clusters.k = 2;
    std::vector<ColumnDescriptor> descs;
    for (Index j = 0; j < 2 * per; ++j) {
        Eigen::VectorXd coef(rank);
        for (Index k = 0; k < rank; ++k) coef[k] = gauss(rng) / (1.0 + k);
        x.col(j) = (j < per ? basis_a : basis_b) * coef;
        clusters.assignments.push_back(j < per ? 0 : 1);
        ColumnDescriptor c;
        c.sim_key = "s" + std::to_string(j / 8);
        c.timestep = static_cast<int>(j % 8);
        c.he_length = 6.0 + 0.2 * static_cast<double>(j);
        c.tip_velocity = 0.7;
        c.radius = 0.2;
        c.time = c.timestep;
        descs.push_back(c);
    }
    InMemoryBlockMatrix src = split_rows(x, 3);
    CommonGrid grid = make_grid(0, 20, 0, 10, 1.0, 3);
    REQUIRE(grid.size() == d);

    SurrogateOptions opts = quick_options(12);
    SurrogateBundle lin = fit_linear(src, descs, grid, TimestepRule{}, Variable::mass, opts);
    SurrogateBundle loc = fit_locally_linear(src, descs, grid, TimestepRule{}, Variable::mass,
                                             clusters, opts);

    auto rank90 = [](const Eigen::VectorXd& sigma) {
        Index n = 0;
        while (cumulative_variance(sigma, n) < 90.0) ++n;
        return n;
    };
    Index global = rank90(lin.locals[0].basis.sigma);
    bool some_cluster_smaller = rank90(loc.locals[0].basis.sigma) < global ||
                                rank90(loc.locals[1].basis.sigma) < global;
    CHECK(some_cluster_smaller);
}

TEST_CASE("predict_field at a training descriptor recovers the snapshot") {
    Ensemble e = make_ensemble(5, 71);
    SurrogateBundle bundle = fit_linear(e.matrix, e.descriptors, e.spec.grid, e.spec.rule,
                                        Variable::mass, quick_options(12));
    const auto& local = bundle.locals[0];

    // Policy-selected weight count; the selected weights are predicted with
    // low uncertainty, so against the same-rank exact-weight reconstruction
    // the prediction lands within its own 3-sigma budget.
    const Index col = 10;
    const ColumnDescriptor& c = e.descriptors[static_cast<size_t>(col)];
    FieldPrediction pred = predict_field(bundle, c.he_length, c.tip_velocity, c.radius, c.time);
    REQUIRE(pred.n_used >= 2);
    Eigen::VectorXd best = reconstruct(local.basis, local.training_weights.col(col), pred.n_used);
    double budget = 0;
    for (Index k = 0; k < pred.n_used; ++k)
        budget += pred.weights[static_cast<size_t>(k)].std * pred.weights[static_cast<size_t>(k)].std;
    CHECK((pred.field - best).norm() <= 3.0 * std::sqrt(budget) + 1e-9 * best.norm());
    for (const auto& w : pred.warnings) CHECK(w.rfind("extrapolation", 0) != 0);

    // Determinism: an identical query gives an identical field.
    FieldPrediction again = predict_field(bundle, c.he_length, c.tip_velocity, c.radius, c.time);
    CHECK(pred.field == again.field);
    CHECK(pred.n_used == again.n_used);

    // Way outside the hull: flagged, not fatal.
    FieldPrediction outside = predict_field(bundle, 30.0, 0.99, 0.5, c.time, 4);
    CHECK(!outside.warnings.empty());
}

TEST_CASE("lineout slices the nearest row in ascending x") {
    CommonGrid grid = make_grid(-8, 0, 0, 4, 0.5, 2);
    Eigen::VectorXd field = Eigen::VectorXd::Constant(grid.size(), 3.5);
    auto line = lineout(field, grid, 1.1, {-6.0, -2.0});
    REQUIRE(!line.empty());
    double prev_x = -1e300;
    for (auto [x, v] : line) {
        CHECK(v == 3.5);
        CHECK(x > prev_x);
        CHECK(x >= -6.0);
        CHECK(x <= -2.0);
        prev_x = x;
    }

    // A step at x = -4 lands within one cell of -4.
    for (Index j = 0; j < grid.ny; ++j)
        for (Index i = 0; i < grid.nx; ++i)
            field[grid.natural_index(i, j)] = grid.cell_x(i) > -4.0 ? 1.0 : 0.0;
    auto step_line = lineout(field, grid, 2.0, {-8.0, 0.0});
    for (size_t i = 1; i < step_line.size(); ++i)
        if (step_line[i].second != step_line[i - 1].second)
            CHECK(std::abs(step_line[i].first - (-4.0)) <= grid.delta);

    CHECK_THROWS_AS(lineout(field, grid, 9.0, {-6.0, -2.0}), OutOfDomainError);
    CHECK_THROWS_AS(lineout(field, grid, 1.0, {-20.0, -2.0}), OutOfDomainError);
    CHECK_THROWS_AS(lineout(field, grid, 1.0, {-2.0, -6.0}), OutOfDomainError);
}

TEST_CASE("plate-edge location from lineouts") {
    // Step 0 -> 1 at x0 = -4, threshold 0.5: edge within one spacing.
    std::vector<std::pair<double, double>> step;
    for (double x = -8; x <= 0; x += 0.5) step.emplace_back(x, x > -4.0 ? 1.0 : 0.0);
    auto edge = locate_plate_edge(step, 0.5);
    REQUIRE(edge.has_value());
    CHECK(std::abs(*edge - (-4.0)) <= 0.5);

    // All-zero line: nothing to find.
    std::vector<std::pair<double, double>> zero(10, {0.0, 0.0});
    CHECK(!locate_plate_edge(zero, 0.5).has_value());

    // Monotone ramp v = (x+8)/8 on [-8,0], threshold 0.25 of max(=1):
    // the rightmost crossing of 0.25 is at x = -6 exactly.
    std::vector<std::pair<double, double>> ramp;
    for (double x = -8; x <= 0; x += 0.5) ramp.emplace_back(x, (x + 8.0) / 8.0);
    auto cross = locate_plate_edge(ramp, 0.25);
    REQUIRE(cross.has_value());
    CHECK(*cross == doctest::Approx(-6.0));

    // Constant line above threshold never crosses.
    std::vector<std::pair<double, double>> flat(10, {0.0, 1.0});
    CHECK(!locate_plate_edge(flat, 0.5).has_value());
}

TEST_CASE("bundles round-trip through disk with identical predictions") {
    Ensemble e = make_ensemble(3, 81);
    ClusterModel clusters;
    clusters.k = 2;
    for (const auto& c : e.descriptors)
        clusters.assignments.push_back(c.time < 5 ? 0 : 1);

    SurrogateBundle bundle = fit_locally_linear(e.matrix, e.descriptors, e.spec.grid, e.spec.rule,
                                                Variable::mass, clusters, quick_options(5));
    auto dir = std::filesystem::temp_directory_path() / "stsurro_test_bundle";
    std::filesystem::remove_all(dir);
    save_bundle(bundle, dir);
    SurrogateBundle back = load_bundle(dir);

    CHECK(back.kind == SurrogateKind::locally_linear);
    CHECK(back.descriptors.size() == bundle.descriptors.size());
    CHECK(back.rule.divisor == bundle.rule.divisor);
    REQUIRE(back.locals.size() == bundle.locals.size());

    FieldPrediction a = predict_field(bundle, 9.0, 0.8, 0.2, 7.0);
    FieldPrediction b = predict_field(back, 9.0, 0.8, 0.2, 7.0);
    CHECK(a.cluster == b.cluster);
    CHECK(a.n_used == b.n_used);
    CHECK(a.field == b.field);
}
