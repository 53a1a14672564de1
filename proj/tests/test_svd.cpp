#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <random>

#include "stsurro/errors.hpp"
#include "stsurro/svd.hpp"

using namespace stsurro;

namespace {

Eigen::MatrixXd random_matrix(Index rows, Index cols, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
    return m;
}

// Matrix with a prescribed singular spectrum, via random orthogonal factors.
Eigen::MatrixXd matrix_with_spectrum(Index rows, const Eigen::VectorXd& sigma, uint64_t seed) {
    Index n = sigma.size();
    Eigen::HouseholderQR<Eigen::MatrixXd> qu(random_matrix(rows, n, seed));
    Eigen::HouseholderQR<Eigen::MatrixXd> qv(random_matrix(n, n, seed + 1));
    Eigen::MatrixXd u = qu.householderQ() * Eigen::MatrixXd::Identity(rows, n);
    Eigen::MatrixXd v = qv.householderQ() * Eigen::MatrixXd::Identity(n, n);
    return u * sigma.asDiagonal() * v.transpose();
}

Eigen::MatrixXd dense_u(const SvdBasis& basis) {
    Eigen::MatrixXd u(basis.rows(), basis.n_basis());
    Index at = 0;
    for (const auto& b : basis.u_blocks) {
        u.middleRows(at, b.rows()) = b;
        at += b.rows();
    }
    return u;
}

double reconstruction_error(const Eigen::MatrixXd& x, const SvdBasis& basis) {
    Eigen::MatrixXd xhat = dense_u(basis) *
                           basis.sigma.head(basis.n_basis()).asDiagonal() * basis.v.transpose();
    return (x - xhat).norm();
}

}  // namespace

TEST_CASE("normal equations on a diagonal-like matrix") {
    Eigen::MatrixXd x(4, 2);
    x << 3, 0, 0, 2, 0, 0, 0, 0;
    SvdBasis basis = svd_normal_equations(split_rows(x, 2));
    REQUIRE(basis.sigma.size() == 2);
    CHECK(basis.sigma[0] == doctest::Approx(3.0));
    CHECK(basis.sigma[1] == doctest::Approx(2.0));
    CHECK(basis.effective_rank == 2);
}

TEST_CASE("duplicate columns are rank deficient") {
    Eigen::MatrixXd x = random_matrix(50, 1, 3).replicate(1, 2);
    SvdBasis basis = svd_normal_equations(split_rows(x, 3));
    CHECK(basis.effective_rank == 1);
    CHECK(basis.sigma[1] / basis.sigma[0] <
          2 * std::numeric_limits<double>::epsilon() * 2);
}

TEST_CASE("normal equations match a dense reference on a random 500x40 matrix") {
    Eigen::MatrixXd x = random_matrix(500, 40, 17);
    SvdBasis basis = svd_normal_equations(split_rows(x, 4));
    Eigen::JacobiSVD<Eigen::MatrixXd> ref(x);
    for (Index i = 0; i < 40; ++i)
        CHECK(basis.sigma[i] == doctest::Approx(ref.singularValues()[i]).epsilon(1e-6));
}

TEST_CASE("block QR with one block equals a plain thin-QR SVD") {
    Eigen::MatrixXd x = random_matrix(80, 12, 5);
    SvdBasis basis = svd_block_qr(split_rows(x, 1));
    Eigen::JacobiSVD<Eigen::MatrixXd> ref(x);
    for (Index i = 0; i < 12; ++i)
        CHECK(basis.sigma[i] == doctest::Approx(ref.singularValues()[i]).epsilon(1e-12));
    CHECK(orthonormality_error(basis) < 1e-12);
    CHECK(reconstruction_error(x, basis) < 1e-10 * x.norm());
}

TEST_CASE("block QR matches the dense reference across uneven blockings") {
    Eigen::MatrixXd x = random_matrix(5000, 100, 23);
    Eigen::JacobiSVD<Eigen::MatrixXd> ref(x);

    std::vector<Eigen::MatrixXd> blocks;
    Index cuts[7] = {311, 740, 1200, 2217, 3105, 4444, 5000};
    Index at = 0;
    for (Index cut : cuts) {
        blocks.push_back(x.middleRows(at, cut - at));
        at = cut;
    }
    SvdBasis basis = svd_block_qr(InMemoryBlockMatrix(blocks));
    for (Index i = 0; i < 100; ++i)
        CHECK(basis.sigma[i] ==
              doctest::Approx(ref.singularValues()[i]).epsilon(1e-10));
    CHECK(orthonormality_error(basis) < 1e-10);

    // U columns agree with the single-block factorization up to the common
    // sign convention, i.e. exactly.
    SvdBasis whole = svd_block_qr(split_rows(x, 1));
    CHECK((dense_u(basis) - dense_u(whole)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("block QR beats normal equations on an ill-conditioned matrix") {
    Eigen::VectorXd sigma(30);
    for (Index i = 0; i < 30; ++i) sigma[i] = std::pow(10.0, -9.0 * i / 29.0);  // kappa = 1e9
    Eigen::MatrixXd x = matrix_with_spectrum(400, sigma, 99);

    SvdBasis qr = svd_block_qr(split_rows(x, 4));
    SvdBasis ne = svd_normal_equations(split_rows(x, 4));
    double err_qr = reconstruction_error(x, qr);
    // The normal-equations basis may carry fewer columns (dropped rank).
    Eigen::MatrixXd xhat = dense_u(ne) * ne.sigma.head(ne.n_basis()).asDiagonal() *
                           ne.v.transpose();
    double err_ne = (x - xhat).norm();
    CHECK(err_qr < err_ne);
}

TEST_CASE("project and reconstruct round-trip training columns") {
    Eigen::MatrixXd x = random_matrix(200, 10, 31);
    InMemoryBlockMatrix src = split_rows(x, 3);
    SvdBasis basis = svd_block_qr(src);

    // x = u1 -> w = e1 by orthonormality.
    Eigen::VectorXd u1 = dense_u(basis).col(0);
    WeightVector w = project(basis, u1, "u1");
    CHECK(w.w[0] == doctest::Approx(1.0));
    CHECK(w.w.tail(9).cwiseAbs().maxCoeff() < 1e-12);

    // x = 0 -> w = 0.
    CHECK(project(basis, Eigen::VectorXd::Zero(200)).w.cwiseAbs().maxCoeff() == 0.0);

    for (Index j = 0; j < x.cols(); ++j) {
        Eigen::VectorXd col = x.col(j);
        Eigen::VectorXd back = reconstruct(basis, project(basis, col).w, basis.n_basis());
        CHECK((back - col).norm() <= 1e-8 * col.norm());
    }

    // n = 0 reconstructs the zero vector.
    CHECK(reconstruct(basis, project(basis, x.col(0)).w, 0).cwiseAbs().maxCoeff() == 0.0);

    // rank-1 truncation error equals the direct formula.
    Eigen::VectorXd col = x.col(4);
    Eigen::VectorXd w4 = project(basis, col).w;
    Eigen::VectorXd r1 = reconstruct(basis, w4, 1);
    Eigen::VectorXd u0 = dense_u(basis).col(0);
    double direct = (col - u0.dot(col) * u0).norm();
    CHECK((col - r1).norm() == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("projection batches match per-column projection") {
    Eigen::MatrixXd x = random_matrix(60, 8, 41);
    InMemoryBlockMatrix src = split_rows(x, 4);
    SvdBasis basis = svd_block_qr(src);
    Eigen::MatrixXd all = project_all(basis, src);
    for (Index j = 0; j < x.cols(); ++j)
        CHECK((all.col(j) - project(basis, x.col(j)).w).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("centered SVD subtracts and restores the mean snapshot") {
    Eigen::MatrixXd x = random_matrix(100, 6, 51);
    x.array() += 5.0;  // give the mean something to do
    InMemoryBlockMatrix src = split_rows(x, 3);
    SvdBasis basis = svd_block_qr(src, {.centered = true});
    REQUIRE(basis.centered);
    REQUIRE(basis.mean.size() == 100);
    for (Index j = 0; j < x.cols(); ++j) {
        Eigen::VectorXd back = reconstruct(basis, project(basis, x.col(j)).w, basis.n_basis());
        CHECK((back - x.col(j)).norm() <= 1e-8 * x.col(j).norm());
    }
    // n = 0 yields the mean.
    Eigen::VectorXd zero_w = Eigen::VectorXd::Zero(basis.n_basis());
    CHECK((reconstruct(basis, zero_w, 0) - basis.mean).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cumulative variance hand case and monotonicity") {
    Eigen::VectorXd sigma(3);
    sigma << 3, 4, 0;
    CHECK(cumulative_variance(sigma, 0) == 0.0);
    CHECK(cumulative_variance(sigma, 1) == 36.0);
    CHECK(cumulative_variance(sigma, 2) == 100.0);
    CHECK(cumulative_variance(sigma, 3) == 100.0);

    Eigen::VectorXd zeros = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(cumulative_variance(zeros, 2), AllZeroSpectrumError);

    Eigen::MatrixXd x = random_matrix(100, 12, 61);
    SvdBasis basis = svd_block_qr(split_rows(x, 2));
    double prev = 0;
    for (Index n = 0; n <= basis.sigma.size(); ++n) {
        double cv = cumulative_variance(basis.sigma, n);
        CHECK(cv >= prev);
        prev = cv;
    }
    CHECK(cumulative_variance(basis.sigma, basis.effective_rank) == 100.0);
}

TEST_CASE("truncation error identity holds for all n") {
    Eigen::MatrixXd x = random_matrix(300, 20, 71);
    InMemoryBlockMatrix src = split_rows(x, 5);
    SvdBasis basis = svd_block_qr(src);
    const double scale = x.squaredNorm();
    for (Index n = 0; n <= 20; ++n) {
        TruncationError err = truncation_error(src, basis, n);
        CHECK(std::abs(err.direct - err.sigma_tail) <= 1e-8 * scale);
    }
    TruncationError full = truncation_error(src, basis, 20);
    CHECK(full.direct <= 1e-8 * scale);
    TruncationError none = truncation_error(src, basis, 0);
    CHECK(none.direct == doctest::Approx(scale).epsilon(1e-12));
}

TEST_CASE("non-finite input is rejected") {
    Eigen::MatrixXd x = random_matrix(10, 3, 81);
    x(4, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(svd_block_qr(split_rows(x, 2)), NonFiniteInputError);
    CHECK_THROWS_AS(svd_normal_equations(split_rows(x, 2)), NonFiniteInputError);
}

TEST_CASE("basis persists and reloads bit-exactly") {
    auto dir = std::filesystem::temp_directory_path() / "stsurro_test_basis";
    std::filesystem::remove_all(dir);
    Eigen::MatrixXd x = random_matrix(64, 9, 91);
    SvdBasis basis = svd_block_qr(split_rows(x, 3), {.centered = true});
    save_basis(basis, dir);
    SvdBasis back = load_basis(dir);
    CHECK(back.sigma == basis.sigma);
    CHECK(back.v == basis.v);
    CHECK(back.effective_rank == basis.effective_rank);
    CHECK(back.centered == basis.centered);
    CHECK(back.mean == basis.mean);
    REQUIRE(back.u_blocks.size() == basis.u_blocks.size());
    for (size_t k = 0; k < back.u_blocks.size(); ++k)
        CHECK(back.u_blocks[k] == basis.u_blocks[k]);
}
