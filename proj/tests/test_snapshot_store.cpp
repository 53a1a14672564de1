#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "stsurro/errors.hpp"
#include "stsurro/snapshot_store.hpp"

using namespace stsurro;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("stsurro_test_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

RawField make_field(std::vector<RawPoint> pts) {
    RawField f;
    f.points = std::move(pts);
    return f;
}

// Brute-force 1-NN with the same tie-break, as the oracle.
Eigen::VectorXd remap_brute(const RawField& raw, const CommonGrid& grid) {
    Eigen::VectorXd out(grid.size());
    for (Index j = 0; j < grid.ny; ++j) {
        for (Index i = 0; i < grid.nx; ++i) {
            double cx = grid.cell_x(i), cy = grid.cell_y(j);
            double best_d2 = 1e300, best_y = 0, best_x = 0, best_v = 0;
            for (const auto& p : raw.points) {
                double d2 = (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
                if (d2 < best_d2 ||
                    (d2 == best_d2 && (p.y < best_y || (p.y == best_y && p.x < best_x)))) {
                    best_d2 = d2;
                    best_y = p.y;
                    best_x = p.x;
                    best_v = p.value;
                }
            }
            out[grid.natural_index(i, j)] = best_v;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("align_and_crop shifts to the lower-right origin and crops") {
    // 3-point hand case: max x = 42, shifts to {-32, 0, -37}; -37 is cropped.
    RawField raw = make_field({{10, 0, 1.0}, {42, 0, 2.0}, {5, 1, 3.0}});
    RawField out = align_and_crop(raw, -32.0);
    REQUIRE(out.points.size() == 2);
    CHECK(out.points[0].x == doctest::Approx(-32.0));
    CHECK(out.points[0].value == 1.0);
    CHECK(out.points[1].x == doctest::Approx(0.0));
    CHECK(out.points[1].value == 2.0);
}

TEST_CASE("align_and_crop with zero shift and no crop is the identity") {
    RawField raw = make_field({{0, 0, 1.0}, {-5, 2, 2.0}, {-31, 3, 3.0}});
    RawField out = align_and_crop(raw, -32.0);
    REQUIRE(out.points.size() == raw.points.size());
    for (size_t i = 0; i < raw.points.size(); ++i) {
        CHECK(out.points[i].x == raw.points[i].x);
        CHECK(out.points[i].y == raw.points[i].y);
        CHECK(out.points[i].value == raw.points[i].value);
    }
}

TEST_CASE("align_and_crop is idempotent on its own output") {
    RawField raw = make_field({{10, 0, 1.0}, {42, 0, 2.0}, {20, 1, 3.0}, {41, 2, 4.0}});
    RawField once = align_and_crop(raw, -25.0);
    RawField twice = align_and_crop(once, -25.0);
    REQUIRE(once.points.size() == twice.points.size());
    for (size_t i = 0; i < once.points.size(); ++i) {
        CHECK(once.points[i].x == twice.points[i].x);
        CHECK(once.points[i].value == twice.points[i].value);
    }
}

TEST_CASE("align_and_crop errors") {
    CHECK_THROWS_AS(align_and_crop(RawField{}, -32.0), EmptyFieldError);
    RawField raw = make_field({{0, 0, 1.0}, {50, 0, 2.0}});
    CHECK_THROWS_AS(align_and_crop(raw, 10.0), EmptyFieldError);
}

TEST_CASE("remap_1nn is the identity on grid-coincident points") {
    CommonGrid grid = make_grid(0, 1, 0, 1, 0.25, 2);
    RawField raw;
    for (Index j = 0; j < grid.ny; ++j)
        for (Index i = 0; i < grid.nx; ++i)
            raw.points.push_back(
                {grid.cell_x(i), grid.cell_y(j), static_cast<double>(grid.natural_index(i, j))});
    Eigen::VectorXd out = remap_1nn(raw, grid);
    for (Index n = 0; n < grid.size(); ++n) CHECK(out[n] == static_cast<double>(n));
}

TEST_CASE("remap_1nn with a single source point paints everything") {
    CommonGrid grid = make_grid(-2, 2, 0, 2, 0.5, 3);
    RawField raw = make_field({{0.3, 0.7, 42.0}});
    Eigen::VectorXd out = remap_1nn(raw, grid);
    CHECK((out.array() == 42.0).all());
}

TEST_CASE("remap_1nn on a 2x2 grid with corner sources") {
    CommonGrid grid = make_grid(0, 2, 0, 2, 1.0, 1);  // centers at 0.5, 1.5
    RawField raw = make_field({{0, 0, 0.0}, {2, 0, 1.0}, {0, 2, 2.0}, {2, 2, 3.0}});
    Eigen::VectorXd out = remap_1nn(raw, grid);
    Eigen::VectorXd oracle = remap_brute(raw, grid);
    CHECK(out == oracle);
    CHECK(out[grid.natural_index(0, 0)] == 0.0);
    CHECK(out[grid.natural_index(1, 0)] == 1.0);
    CHECK(out[grid.natural_index(0, 1)] == 2.0);
    CHECK(out[grid.natural_index(1, 1)] == 3.0);
}

TEST_CASE("remap_1nn matches brute force on scattered points") {
    CommonGrid grid = make_grid(-4, 0, 0, 2, 0.25, 3);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ux(-4.5, 0.5), uy(-0.3, 2.3), uv(0, 10);
    RawField raw;
    for (int i = 0; i < 200; ++i) raw.points.push_back({ux(rng), uy(rng), uv(rng)});
    CHECK(remap_1nn(raw, grid) == remap_brute(raw, grid));
}

TEST_CASE("remap_1nn is invariant under permutation of the input points") {
    CommonGrid grid = make_grid(0, 2, 0, 1, 0.25, 2);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 2);
    RawField raw;
    for (int i = 0; i < 60; ++i) raw.points.push_back({u(rng), u(rng) / 2, u(rng)});
    // Duplicate coordinates force the tie-break to matter.
    raw.points.push_back({0.5, 0.5, 7.0});
    raw.points.push_back({0.5, 0.25, 9.0});

    Eigen::VectorXd base = remap_1nn(raw, grid);
    RawField shuffled = raw;
    std::shuffle(shuffled.points.begin(), shuffled.points.end(), rng);
    CHECK(remap_1nn(shuffled, grid) == base);
}

TEST_CASE("remap_1nn breaks exact ties toward the smallest y then x") {
    CommonGrid grid = make_grid(0, 1, 0, 1, 1.0, 1);  // one cell, center (0.5, 0.5)
    RawField raw =
        make_field({{0.5, 1.0, 1.0}, {1.0, 0.5, 2.0}, {0.0, 0.5, 3.0}, {0.5, 0.0, 4.0}});
    Eigen::VectorXd out = remap_1nn(raw, grid);
    CHECK(out[0] == 4.0);  // smallest y wins
    raw = make_field({{1.0, 0.5, 2.0}, {0.0, 0.5, 3.0}});
    out = remap_1nn(raw, grid);
    CHECK(out[0] == 3.0);  // equal y, smallest x wins
}

TEST_CASE("assemble round-trips blocks and columns exactly") {
    auto dir = temp_dir("store_roundtrip");
    CommonGrid grid = make_grid(0, 5, 0, 2, 1.0, 3);  // nx=5, ny=2 -> D=10
    REQUIRE(grid.size() == 10);

    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd x(10, 4);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);

    std::vector<std::pair<ColumnDescriptor, Eigen::VectorXd>> snaps;
    for (Index j = 0; j < 4; ++j) {
        ColumnDescriptor c{"sim", static_cast<int>(j), 10.0, 0.8, 0.2, static_cast<double>(j)};
        snaps.emplace_back(c, x.col(j));
    }
    BlockStore store = assemble(dir, grid, Variable::mass, snaps);

    // Concatenating blocks in ascending y order reproduces X bit-exactly.
    Eigen::MatrixXd rebuilt(10, 4);
    Index at = 0;
    for (int k = 0; k < store.n_blocks(); ++k) {
        Eigen::MatrixXd b = store.block(k);
        rebuilt.middleRows(at, b.rows()) = b;
        at += b.rows();
    }
    CHECK(rebuilt == x);

    for (Index j = 0; j < 4; ++j) CHECK(store.read_column(j) == x.col(j));

    BlockStore reopened = BlockStore::open(dir);
    CHECK(reopened.cols() == 4);
    CHECK(reopened.rows() == 10);
    CHECK(reopened.block(1) == store.block(1));
    CHECK(reopened.columns()[2].timestep == 2);
}

TEST_CASE("single-block store equals the dense matrix") {
    auto dir = temp_dir("store_k1");
    CommonGrid grid = make_grid(0, 4, 0, 2, 1.0, 1);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(8, 3);
    std::vector<std::pair<ColumnDescriptor, Eigen::VectorXd>> snaps;
    for (Index j = 0; j < 3; ++j)
        snaps.emplace_back(ColumnDescriptor{"s", static_cast<int>(j), 1, 1, 1, 0}, x.col(j));
    BlockStore store = assemble(dir, grid, Variable::x_momentum, snaps);
    REQUIRE(store.n_blocks() == 1);
    CHECK(store.block(0) == x);
}

TEST_CASE("assemble rejects bad input") {
    auto dir = temp_dir("store_errors");
    CommonGrid grid = make_grid(0, 4, 0, 2, 1.0, 2);
    Eigen::VectorXd good = Eigen::VectorXd::Zero(8), bad = Eigen::VectorXd::Zero(7);
    ColumnDescriptor c{"s", 0, 1, 1, 1, 0};
    CHECK_THROWS_AS(assemble(dir, grid, Variable::mass, {{c, bad}}), DimensionMismatchError);
    CHECK_THROWS_AS(assemble(dir, grid, Variable::mass, {{c, good}, {c, good}}),
                    DuplicateColumnError);
}

TEST_CASE("out-of-range reads are rejected") {
    auto dir = temp_dir("store_range");
    CommonGrid grid = make_grid(0, 4, 0, 2, 1.0, 2);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(8);
    BlockStore store = assemble(dir, grid, Variable::mass, {{{"s", 0, 1, 1, 1, 0}, v}});
    CHECK_THROWS_AS(store.block(2), IndexOutOfRangeError);
    CHECK_THROWS_AS(store.read_column(1), IndexOutOfRangeError);
}

TEST_CASE("InMemoryBlockMatrix splits match the dense source") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 4);
    InMemoryBlockMatrix split = split_rows(x, 3);
    CHECK(split.n_blocks() == 3);
    Eigen::MatrixXd rebuilt(10, 4);
    Index at = 0;
    for (int k = 0; k < split.n_blocks(); ++k) {
        rebuilt.middleRows(at, split.block_rows(k)) = split.block(k);
        at += split.block_rows(k);
    }
    CHECK(rebuilt == x);
}
