#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "gradflow/closed_form.hpp"
#include "gradflow/errors.hpp"
#include "gradflow/model.hpp"
#include "gradflow/similarity.hpp"
#include "oracles.hpp"

using namespace gradflow;

namespace {

/// Identity-activation model whose hidden weights are all replaced by `w`.
Model linear_model(const Graph& g, std::size_t depth, std::size_t width, bool residual, std::uint64_t seed) {
    ModelConfig mc;
    mc.depth = depth;
    mc.hidden_dim = width;
    mc.in_dim = g.features().cols();
    mc.num_classes = g.num_classes();
    mc.activation = Activation::identity();
    mc.residual = residual;
    mc.seed = seed;
    return Model::init(mc);
}

Tape run_with_backward(const Model& m, const Graph& g) {
    Tape t = forward(m, g);
    const auto loss = masked_cross_entropy(t.logits, g.labels(), g.train_mask());
    backward(t, m, g, loss.grad);
    return t;
}

}  // namespace

TEST_SUITE("similarity") {

TEST_CASE("node similarity small cases") {
    CHECK(node_similarity({{1, 1}, {1, 1}}) == 0.0);
    CHECK(node_similarity({{1, 0}, {0, 1}}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(node_similarity({{2, 0}, {0, 0}, {1, 0}}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(std::isnan(node_similarity({{NAN, 0}, {0, 0}})));
}

TEST_CASE("mu vanishes exactly on constant-row matrices") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(10), d = 1 + rng.below(5);
        const auto row = rng.normal_matrix(1, d, 100.0);
        DenseMatrix x(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) x(i, j) = row(0, j);
        }
        CHECK(node_similarity(x) <= 1e-12 * (1.0 + frobenius_norm(x)));
        if (n > 1) {
            x(rng.below(n), rng.below(d)) += 1.0;
            CHECK(node_similarity(x) > 0.0);
        }
    }
}

TEST_CASE("mu is a seminorm equal to the norm of the centered matrix") {
    Rng rng(32);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.below(9), d = 1 + rng.below(6);
        const auto x = rng.normal_matrix(n, d, rng.uniform(0.01, 100.0));
        const auto y = rng.normal_matrix(n, d, rng.uniform(0.01, 100.0));
        const double mx = node_similarity(x);
        CHECK(std::abs(mx - oracle::frobenius(oracle::matmul(oracle::centering_matrix(n), x))) <=
              1e-12 * std::max(1.0, mx));
        CHECK(node_similarity(x + y) <= mx + node_similarity(y) + 1e-9);
        const double c = rng.uniform(-5.0, 5.0);
        CHECK(std::abs(node_similarity(c * x) - std::abs(c) * mx) <= 1e-9 * std::max(1.0, mx));
    }
}

TEST_CASE("profile from a tape") {
    const auto g = sbm_generate({2, 8, 0.6, 0.2, 3, 5});

    SUBCASE("a forward-only tape has no gradient profile") {
        const auto m = linear_model(g, 2, 4, false, 1);
        const auto t = forward(m, g);
        CHECK_THROWS_AS(similarity_profile(t, ProfileKind::Gradient), StateError);
        const auto rep = similarity_profile(t, ProfileKind::Representation);
        CHECK(rep.values.size() == 3);
        CHECK(rep.values[2] == node_similarity(t.x[2]));
    }

    SUBCASE("zero-layer passthrough") {
        auto m = linear_model(g, 1, 4, false, 1);
        m.layers.clear();
        const auto t = forward(m, g);
        const auto rep = similarity_profile(t, ProfileKind::Representation);
        REQUIRE(rep.values.size() == 1);
        CHECK(rep.values[0] == node_similarity(t.x[0]));
        CHECK(rep.depth() == 0);
    }

    SUBCASE("zero weights without residual zero every earlier gradient") {
        auto m = linear_model(g, 4, 4, false, 2);
        for (auto& w : m.layers) w = DenseMatrix(4, 4);
        const auto p = similarity_profile(run_with_backward(m, g), ProfileKind::Gradient);
        REQUIRE(p.values.size() == 5);
        for (std::size_t l = 0; l < 4; ++l) CHECK(p.values[l] == 0.0);
    }

    SUBCASE("8-layer linear GCN profile matches the closed form layer by layer") {
        const auto m = linear_model(g, 8, 4, false, 3);
        const auto t = run_with_backward(m, g);
        const auto p = similarity_profile(t, ProfileKind::Gradient);
        const auto adj = g.norm_adj().to_dense();
        for (std::size_t l = 0; l <= 8; ++l) {
            const double direct = oracle::mu(oracle::plain_chain_gradient(l, m.layers, adj, t.grad_x[8]));
            CHECK(std::abs(p.values[l] - direct) <= 1e-10 * std::max(1e-300, direct) + 1e-300);
        }
    }
}

TEST_CASE("nan layers are recorded, not thrown") {
    const auto p = make_profile(ProfileKind::Gradient, {1.0, NAN, INFINITY, 2.0});
    CHECK(p.nan_layers == std::vector<std::size_t>{1, 2});
    std::ostringstream csv;
    write_profile_csv(csv, p);
    CHECK(csv.str() == "layer,value,is_nan\n0,1,0\n1,nan,1\n2,inf,1\n3,2,0\n");
}

TEST_CASE("fit_decay") {
    const std::size_t depth = 10;
    const double q = 0.5;
    std::vector<double> geometric(depth + 1);
    for (std::size_t l = 0; l <= depth; ++l) geometric[l] = std::pow(q, static_cast<double>(depth - l));
    const auto fit = fit_decay(make_profile(ProfileKind::Gradient, geometric));
    CHECK(std::abs(fit.slope - std::log(q)) <= 1e-9);
    CHECK(fit.r_squared == doctest::Approx(1.0));
    CHECK(fit.points == depth + 1);

    const auto flat = fit_decay(make_profile(ProfileKind::Gradient, std::vector<double>(6, 3.0)));
    CHECK(std::abs(flat.slope) <= 1e-9);

    SUBCASE("noisy profile matches the normal-equations oracle") {
        Rng rng(33);
        std::vector<double> v(depth + 1), xs, ys;
        for (std::size_t l = 0; l <= depth; ++l) {
            v[l] = geometric[l] * std::exp(rng.normal() * 0.3);
            xs.push_back(static_cast<double>(depth - l));
            ys.push_back(std::log(v[l]));
        }
        const auto f = fit_decay(make_profile(ProfileKind::Gradient, v));
        const auto ref = oracle::regression(xs, ys);
        CHECK(std::abs(f.slope - ref.slope) <= 1e-8);
        CHECK(std::abs(f.intercept - ref.intercept) <= 1e-8);
    }

    SUBCASE("non-positive and non-finite values are skipped") {
        const auto f = fit_decay(make_profile(ProfileKind::Gradient, {0.0, NAN, 0.25, 0.5, 1.0}));
        CHECK(f.points == 3);
        CHECK(f.first_layer == 2);
        CHECK(f.last_layer == 4);
        CHECK(std::abs(f.slope - std::log(0.5)) <= 1e-12);
    }

    CHECK_THROWS_AS(fit_decay(make_profile(ProfileKind::Gradient, {0.0, 0.0, 0.0})), FitError);
    CHECK_THROWS_AS(fit_decay(make_profile(ProfileKind::Gradient, {NAN, INFINITY, 1.0, 2.0})), FitError);
}

}
