#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "gradflow/errors.hpp"
#include "gradflow/linalg.hpp"
#include "gradflow/rng.hpp"
#include "oracles.hpp"

using namespace gradflow;

TEST_SUITE("linalg") {

TEST_CASE("matmul small cases") {
    CHECK(matmul({{1, 0}, {0, 1}}, {{3, 4}, {5, 6}}) == DenseMatrix{{3, 4}, {5, 6}});
    CHECK(matmul({{1, 2}}, {{3}, {4}}) == DenseMatrix{{11}});
    CHECK_THROWS_AS(matmul(DenseMatrix(2, 3), DenseMatrix(2, 3)), ShapeError);
}

TEST_CASE("matmul matches the triple-loop oracle") {
    Rng rng(11);
    const auto a = rng.normal_matrix(7, 5);
    const auto b = rng.normal_matrix(5, 3);
    CHECK(max_abs_diff(matmul(a, b), oracle::matmul(a, b)) <= 1e-12);
}

TEST_CASE("matmul is associative") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = rng.normal_matrix(4, 6);
        const auto b = rng.normal_matrix(6, 3);
        const auto c = rng.normal_matrix(3, 5);
        const auto left = matmul(matmul(a, b), c);
        const auto right = matmul(a, matmul(b, c));
        CHECK(oracle::scaled_diff(left, right) <= 1e-9);
    }
}

TEST_CASE("spmm") {
    Rng rng(13);
    const auto b = rng.normal_matrix(10, 4);
    CHECK(spmm(CsrMatrix::identity(10), b) == b);
    CHECK(spmm(CsrMatrix::from_triplets(10, 10, {}), b) == DenseMatrix(10, 4));
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = fixtures::random_sparse(rng, 10, 10, 0.3);
        const auto x = rng.normal_matrix(10, 4);
        CHECK(max_abs_diff(spmm(a, x), oracle::matmul(a.to_dense(), x)) <= 1e-12);
    }
    CHECK_THROWS_AS(spmm(CsrMatrix::identity(3), DenseMatrix(4, 2)), ShapeError);
}

TEST_CASE("csr construction") {
    const auto m = CsrMatrix::from_triplets(2, 3, {{0, 2, 1.0}, {0, 2, 2.0}, {1, 0, -1.0}});
    CHECK(m.nnz() == 2);
    CHECK(m.at(0, 2) == 3.0);
    CHECK(m.at(1, 0) == -1.0);
    CHECK(m.at(1, 1) == 0.0);
    CHECK_THROWS_AS(CsrMatrix(2, 2, {0, 1}, {0}, {1.0}), ShapeError);
    CHECK_THROWS_AS(CsrMatrix(1, 2, {0, 2}, {1, 0}, {1.0, 1.0}), ShapeError);
    CHECK_THROWS_AS(CsrMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), ShapeError);
}

TEST_CASE("transpose") {
    CHECK(transpose(DenseMatrix{{1, 2}, {3, 4}}) == DenseMatrix{{1, 3}, {2, 4}});
    const auto col = transpose(DenseMatrix{{1, 2, 3}});
    CHECK(col.rows() == 3);
    CHECK(col.cols() == 1);
    Rng rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = fixtures::random_sparse(rng, 6, 9, 0.3);
        CHECK(transpose(a).to_dense() == oracle::transpose(a.to_dense()));
    }
}

TEST_CASE("frobenius norm") {
    CHECK(frobenius_norm({{3, 4}}) == 5.0);
    CHECK(frobenius_norm(DenseMatrix(3, 3)) == 0.0);
    Rng rng(15);
    const auto a = rng.normal_matrix(6, 6);
    CHECK(std::abs(frobenius_norm(a) - oracle::frobenius(a)) <= 1e-12);
}

TEST_CASE("spectral norm") {
    CHECK(spectral_norm({{2, 0}, {0, 1}}).value == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(spectral_norm({{0, 1}, {0, 0}}).value == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(spectral_norm(DenseMatrix(3, 3)).value == 0.0);

    Rng rng(16);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = rng.normal_matrix(8, 8);
        const auto est = spectral_norm(a);
        CHECK(est.converged);
        CHECK(std::abs(est.value - oracle::spectral_norm(a)) <= 1e-6 * oracle::spectral_norm(a));
    }
}

TEST_CASE("spectral norm reaches a vector orthogonal to the ones start") {
    // aᵀa kills the all-ones vector, so only the restart finds the top direction.
    const DenseMatrix a{{1, -1}, {1, -1}};
    const auto est = spectral_norm(a);
    CHECK(est.converged);
    CHECK(est.value == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("spectral norm reports non-convergence") {
    Rng rng(17);
    const auto a = rng.normal_matrix(8, 8);
    const auto est = spectral_norm(a, 1e-15, 2);
    CHECK_FALSE(est.converged);
    CHECK(est.iterations == 2);
    CHECK(est.value > 0.0);
}

TEST_CASE("spectral norm never exceeds frobenius norm") {
    Rng rng(18);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = rng.normal_matrix(1 + rng.below(6), 1 + rng.below(6));
        CHECK(spectral_norm(a).value <= frobenius_norm(a) * (1.0 + 1e-12));
    }
}

TEST_CASE("project_b") {
    CHECK(project_b({{1, 2}, {1, 2}, {1, 2}}) == DenseMatrix(3, 2));
    CHECK(project_b({{1, 0}, {0, 1}}) == DenseMatrix{{0.5, -0.5}, {-0.5, 0.5}});
    Rng rng(19);
    const auto x = rng.normal_matrix(9, 3);
    CHECK(max_abs_diff(project_b(x), oracle::center(x)) <= 1e-12);
}

TEST_CASE("pythagorean identity for the centering projection") {
    Rng rng(20);
    for (int trial = 0; trial < 200; ++trial) {
        const auto x = rng.normal_matrix(2 + rng.below(8), 1 + rng.below(5), rng.uniform(0.1, 10.0));
        const auto px = project_b(x);
        const double lhs = std::pow(frobenius_norm(x), 2);
        const double rhs = std::pow(frobenius_norm(px), 2) + std::pow(frobenius_norm(x - px), 2);
        CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, lhs));
    }
}

TEST_CASE("b_power_norm") {
    const auto path = oracle::renormalized_adjacency(4, {{0, 1}, {1, 2}, {2, 3}});
    const auto adj = CsrMatrix::from_dense(path);
    CHECK(b_power_norm(adj, 0).value == doctest::Approx(1.0).epsilon(1e-12));

    const auto k2 = CsrMatrix::from_dense({{0.5, 0.5}, {0.5, 0.5}});
    CHECK(b_power_norm(k2, 1).value <= 1e-12);

    for (std::size_t k : {1, 2, 4}) {
        CHECK(std::abs(b_power_norm(adj, k).value - oracle::b_power_norm(path, k)) <= 1e-8);
    }
}

TEST_CASE("b_power_norm is below one and decreasing on connected non-bipartite graphs") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto g = sbm_generate({2, 8, 0.6, 0.2, 2, seed});
        const auto props = graph_properties(g);
        if (!props.connected || props.bipartite) continue;
        double prev = 1.0;
        for (std::size_t k = 1; k <= 6; ++k) {
            const double v = b_power_norm(g.norm_adj(), k).value;
            CHECK(v < 1.0);
            CHECK(v < prev);
            prev = v;
        }
    }
}

TEST_CASE("linalg results are bit-identical across calls") {
    Rng r1(21), r2(21);
    const auto a = r1.normal_matrix(12, 7);
    const auto b = r2.normal_matrix(12, 7);
    REQUIRE(a == b);
    CHECK(matmul(transpose(a), a) == matmul(transpose(b), b));
    CHECK(spectral_norm(a).value == spectral_norm(b).value);
}

}
