#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "gradflow/errors.hpp"
#include "gradflow/graph.hpp"
#include "oracles.hpp"

using namespace gradflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("gradflow_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

/// Three nodes, two edges, one node per split.
void write_fixture(const fs::path& dir) {
    write(dir / "features.txt", "3 2\n0.5 -1\n# comment\n2 0\n\n-0.25 3\n");
    write(dir / "labels.txt", "0\n1\n1\n");
    write(dir / "masks.txt", "t\nv\ns\n");
    write(dir / "edges.tsv", "0\t1\n2\t1\n");
}

}  // namespace

TEST_SUITE("graph") {

TEST_CASE("normalized adjacency small graphs") {
    CHECK(normalized_adjacency(1, {}).to_dense() == DenseMatrix{{1.0}});
    CHECK(max_abs_diff(normalized_adjacency(2, {{0, 1}}).to_dense(), DenseMatrix{{0.5, 0.5}, {0.5, 0.5}}) <= 1e-15);
    const auto k3 = normalized_adjacency(3, {{0, 1}, {1, 2}, {0, 2}}).to_dense();
    for (double v : k3.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("normalized adjacency matches the dense oracle and is symmetric") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto g = sbm_generate({3, 6, 0.5, 0.1, 2, seed});
        const auto a = g.norm_adj().to_dense();
        CHECK(max_abs_diff(a, oracle::renormalized_adjacency(g.num_nodes(), oracle::edge_pairs(g))) <= 1e-15);
        CHECK(max_abs_diff(a, oracle::transpose(a)) <= 1e-12);
        CHECK(g.norm_adj_t().to_dense() == oracle::transpose(a));
    }
}

TEST_CASE("rows of the random-walk matrix sum to one") {
    const auto g = sbm_generate({2, 10, 0.4, 0.1, 2, 3});
    std::vector<double> deg(g.num_nodes(), 1.0);
    for (const auto& e : g.edges()) {
        deg[e.u] += 1.0;
        deg[e.v] += 1.0;
    }
    const auto a = g.norm_adj().to_dense();
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < g.num_nodes(); ++j) s += a(i, j) * std::sqrt(deg[j] / deg[i]);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("graph canonicalizes edges and validates inputs") {
    const auto g = fixtures::small_graph(3, {{1, 0}, {0, 1}, {2, 1}});
    CHECK(g.edges() == std::vector<Edge>{{0, 1}, {1, 2}});
    CHECK_THROWS_AS(fixtures::small_graph(3, {{0, 3}}), IntegrityError);
    CHECK_THROWS_AS(fixtures::small_graph(3, {{1, 1}}), IntegrityError);
    CHECK_THROWS_AS(Graph(2, {}, DenseMatrix(3, 1), {0, 0}, {Split::Train, Split::Test}), IntegrityError);
    CHECK_THROWS_AS(Graph(2, {}, DenseMatrix(2, 1), {0}, {Split::Train, Split::Test}), IntegrityError);
    CHECK_THROWS_AS(Graph(2, {}, DenseMatrix(2, 1), {0, -1}, {Split::Train, Split::Test}), IntegrityError);
    CHECK_THROWS_AS(Graph(2, {}, DenseMatrix(2, 1, NAN), {0, 1}, {Split::Train, Split::Test}), IntegrityError);
}

TEST_CASE("masks are disjoint and follow the splits") {
    const auto g = sbm_generate({2, 10, 0.5, 0.1, 2, 4});
    std::size_t train = 0, val = 0, test = 0;
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
        const int hits = g.train_mask()[i] + g.val_mask()[i] + g.test_mask()[i];
        CHECK(hits == 1);
        train += g.train_mask()[i];
        val += g.val_mask()[i];
        test += g.test_mask()[i];
    }
    CHECK(train == 12);
    CHECK(val == 4);
    CHECK(test == 4);
    CHECK(mask_indices(g.train_mask()).size() == 12);
}

TEST_CASE("dataset stats") {
    const auto g = fixtures::triangle();
    const auto s = dataset_stats(g);
    CHECK(s.num_nodes == 3);
    CHECK(s.num_edges == 3);
    CHECK(s.num_classes == 2);
    CHECK(s.avg_degree == 2.0);

    const auto cora = reference_stats("cora");
    REQUIRE(cora);
    CHECK(cora->num_nodes == 2708);
    CHECK(cora->num_edges == 5278);
    CHECK(cora->num_classes == 7);
    CHECK(cora->avg_degree == doctest::Approx(3.90).epsilon(0.005));
    const auto cham = reference_stats("chameleon");
    REQUIRE(cham);
    CHECK(cham->num_nodes == 890);
    CHECK(cham->num_edges == 8854);
    CHECK(cham->num_classes == 5);
    CHECK(cham->avg_degree == doctest::Approx(19.90).epsilon(0.005));
    CHECK(reference_stats("citeseer")->num_edges == 4552);
    CHECK(reference_stats("squirrel")->num_edges == 46998);
    CHECK_FALSE(reference_stats("pubmed"));
}

TEST_CASE("load_dataset echoes a handcrafted fixture") {
    const auto dir = scratch_dir("fixture");
    write_fixture(dir);
    const auto g = load_dataset(DatasetFiles::in_directory(dir));
    CHECK(g.num_nodes() == 3);
    CHECK(g.edges() == std::vector<Edge>{{0, 1}, {1, 2}});
    CHECK(g.features() == DenseMatrix{{0.5, -1}, {2, 0}, {-0.25, 3}});
    CHECK(g.labels() == std::vector<int>{0, 1, 1});
    CHECK(g.splits() == std::vector<Split>{Split::Train, Split::Val, Split::Test});
}

TEST_CASE("write_dataset round trips bit-exactly") {
    const auto g = sbm_generate({2, 5, 0.5, 0.2, 3, 9});
    const auto dir = scratch_dir("roundtrip");
    write_dataset(g, DatasetFiles::in_directory(dir));
    const auto back = load_dataset(DatasetFiles::in_directory(dir));
    CHECK(back.edges() == g.edges());
    CHECK(back.features() == g.features());
    CHECK(back.labels() == g.labels());
    CHECK(back.splits() == g.splits());
}

TEST_CASE("load_dataset reports parse errors with line numbers") {
    const auto dir = scratch_dir("bad");
    write_fixture(dir);
    write(dir / "features.txt", "3 2\n0.5 -1\n2 zero\n-0.25 3\n");
    try {
        load_dataset(DatasetFiles::in_directory(dir));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }

    write_fixture(dir);
    write(dir / "masks.txt", "t\nx\ns\n");
    try {
        load_dataset(DatasetFiles::in_directory(dir));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }

    write_fixture(dir);
    write(dir / "edges.tsv", "0\t1\n1 1\n");
    CHECK_THROWS_AS(load_dataset(DatasetFiles::in_directory(dir)), ParseError);

    fs::remove(dir / "labels.txt");
    CHECK_THROWS_AS(load_dataset(DatasetFiles::in_directory(dir)), ParseError);
}

TEST_CASE("load_dataset detects inconsistent counts") {
    const auto dir = scratch_dir("integrity");
    write_fixture(dir);
    write(dir / "labels.txt", "0\n1\n");
    CHECK_THROWS_AS(load_dataset(DatasetFiles::in_directory(dir)), IntegrityError);

    write_fixture(dir);
    write(dir / "features.txt", "4 2\n0.5 -1\n2 0\n-0.25 3\n");
    CHECK_THROWS_AS(load_dataset(DatasetFiles::in_directory(dir)), IntegrityError);

    write_fixture(dir);
    write(dir / "edges.tsv", "0\t5\n");
    CHECK_THROWS_AS(load_dataset(DatasetFiles::in_directory(dir)), IntegrityError);

    write_fixture(dir);
    CHECK_THROWS_AS(load_dataset(DatasetFiles::in_directory(dir), "cora"), IntegrityError);
    CHECK_THROWS_AS(load_dataset(DatasetFiles::in_directory(dir), "unknown"), IntegrityError);
}

TEST_CASE("sbm generator") {
    const auto two_k3 = sbm_generate({2, 3, 1.0, 0.0, 2, 0});
    CHECK(two_k3.edges() == std::vector<Edge>{{0, 1}, {0, 2}, {1, 2}, {3, 4}, {3, 5}, {4, 5}});
    CHECK_FALSE(graph_properties(two_k3).connected);

    const auto complete = sbm_generate({3, 2, 1.0, 1.0, 2, 0});
    CHECK(complete.edges().size() == 15);

    const auto a = sbm_generate({2, 10, 0.3, 0.1, 4, 7});
    const auto b = sbm_generate({2, 10, 0.3, 0.1, 4, 7});
    CHECK(a.edges() == b.edges());
    CHECK(a.features() == b.features());
    CHECK(a.splits() == b.splits());
    CHECK(a.labels()[0] == 0);
    CHECK(a.labels()[19] == 1);

    CHECK_THROWS(sbm_generate({2, 3, 1.5, 0.0, 2, 0}));
}

TEST_CASE("graph properties") {
    const auto tri = graph_properties(3, {{0, 1}, {1, 2}, {0, 2}});
    CHECK(tri.connected);
    CHECK_FALSE(tri.bipartite);
    const auto p2 = graph_properties(2, {{0, 1}});
    CHECK(p2.connected);
    CHECK(p2.bipartite);
    CHECK_FALSE(graph_properties(4, {{0, 1}, {2, 3}}).connected);
}

}
