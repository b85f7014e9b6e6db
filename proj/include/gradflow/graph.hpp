#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gradflow/linalg.hpp"

namespace gradflow {

/// Undirected edge stored with `u < v`.
struct Edge {
    std::size_t u;
    std::size_t v;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

enum class Split : char { Train = 't', Val = 'v', Test = 's', Unused = '-' };

using NodeMask = std::vector<bool>;

/// Sorted indices of the set entries of `mask`.
std::vector<std::size_t> mask_indices(const NodeMask& mask);

/// Renormalized adjacency D̃^{-1/2}(A+I)D̃^{-1/2} for an undirected edge list.
CsrMatrix normalized_adjacency(std::size_t num_nodes, const std::vector<Edge>& edges);

/// Immutable attributed graph with train/val/test masks and a cached Â.
class Graph {
public:
    /// Validates and canonicalizes the inputs. Reversed or repeated edges are
    /// merged; self-loops and out-of-range endpoints are rejected.
    Graph(std::size_t num_nodes, std::vector<Edge> edges, DenseMatrix features, std::vector<int> labels,
          std::vector<Split> splits);

    std::size_t num_nodes() const noexcept { return num_nodes_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const DenseMatrix& features() const noexcept { return features_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    const std::vector<Split>& splits() const noexcept { return splits_; }

    NodeMask mask(Split which) const;
    const NodeMask& train_mask() const noexcept { return train_; }
    const NodeMask& val_mask() const noexcept { return val_; }
    const NodeMask& test_mask() const noexcept { return test_; }

    const CsrMatrix& norm_adj() const noexcept { return norm_adj_; }
    const CsrMatrix& norm_adj_t() const noexcept { return norm_adj_t_; }

private:
    std::size_t num_nodes_;
    std::vector<Edge> edges_;
    DenseMatrix features_;
    std::vector<int> labels_;
    std::size_t num_classes_ = 0;
    std::vector<Split> splits_;
    NodeMask train_, val_, test_;
    CsrMatrix norm_adj_;
    CsrMatrix norm_adj_t_;
};

CsrMatrix normalized_adjacency(const Graph& g);

struct DatasetStats {
    std::size_t num_nodes = 0;
    std::size_t num_edges = 0;
    std::size_t num_classes = 0;
    double avg_degree = 0.0;
    friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

DatasetStats dataset_stats(const Graph& g);

/// Reference statistics for the benchmark graphs (lower-case names:
/// cora, citeseer, chameleon, squirrel). Empty for unknown names.
std::optional<DatasetStats> reference_stats(std::string_view name);

struct DatasetFiles {
    std::filesystem::path edges;
    std::filesystem::path features;
    std::filesystem::path labels;
    std::filesystem::path masks;

    /// `<dir>/edges.tsv`, `features.txt`, `labels.txt`, `masks.txt`.
    static DatasetFiles in_directory(const std::filesystem::path& dir);
};

/// Reads the plain-text dataset format. With `validate_as` set to a known
/// dataset name the node/edge/class counts must match `reference_stats`.
Graph load_dataset(const DatasetFiles& files, std::optional<std::string> validate_as = std::nullopt);

void write_dataset(const Graph& g, const DatasetFiles& files);

struct SbmParams {
    std::size_t blocks = 2;
    std::size_t per_block = 10;
    double p_in = 0.5;
    double p_out = 0.05;
    std::size_t feat_dim = 8;
    std::uint64_t seed = 0;
};

/// Stochastic block model graph: standard-normal features, labels are block
/// ids, masks split 60/20/20 after a seeded shuffle.
Graph sbm_generate(const SbmParams& params);

struct GraphProperties {
    bool connected = false;
    bool bipartite = false;
};

/// Structural checks on the raw edge set (no self-loops).
GraphProperties graph_properties(const Graph& g);
GraphProperties graph_properties(std::size_t num_nodes, const std::vector<Edge>& edges);

}  // namespace gradflow
