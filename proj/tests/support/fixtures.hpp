#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gradflow/diagnostics.hpp"
#include "gradflow/graph.hpp"
#include "gradflow/linalg.hpp"
#include "gradflow/rng.hpp"

namespace fixtures {

/// Collects warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture() {
        previous_ = gradflow::set_warning_sink([this](std::string_view m) { messages.emplace_back(m); });
    }
    ~WarningCapture() { gradflow::set_warning_sink(std::move(previous_)); }
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    std::vector<std::string> messages;

private:
    gradflow::WarningSink previous_;
};

inline gradflow::CsrMatrix random_sparse(gradflow::Rng& rng, std::size_t rows, std::size_t cols, double density) {
    std::vector<gradflow::Triplet> t;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (rng.uniform() < density) t.push_back({i, j, rng.uniform(-1.0, 1.0)});
        }
    }
    return gradflow::CsrMatrix::from_triplets(rows, cols, std::move(t));
}

/// Graph with the given edges, `dim`-dimensional normal features and labels
/// alternating 0/1. The first node trains, the second validates, the rest test.
inline gradflow::Graph small_graph(std::size_t n, std::vector<gradflow::Edge> edges, std::size_t dim = 2,
                                   std::uint64_t seed = 1) {
    gradflow::Rng rng(seed);
    std::vector<int> labels(n);
    std::vector<gradflow::Split> splits(n, gradflow::Split::Test);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
    splits[0] = gradflow::Split::Train;
    if (n > 1) splits[1] = gradflow::Split::Val;
    return gradflow::Graph(n, std::move(edges), rng.normal_matrix(n, dim), std::move(labels), std::move(splits));
}

inline gradflow::Graph triangle() { return small_graph(3, {{0, 1}, {1, 2}, {0, 2}}); }

}  // namespace fixtures
