#include "gradflow/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "gradflow/errors.hpp"
#include "gradflow/rng.hpp"

namespace gradflow {
namespace {

std::vector<Edge> canonical_edges(std::size_t num_nodes, std::vector<Edge> edges) {
    for (Edge& e : edges) {
        if (e.u >= num_nodes || e.v >= num_nodes) {
            throw IntegrityError("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                                 ") references a node outside [0, " + std::to_string(num_nodes) + ")");
        }
        if (e.u == e.v) throw IntegrityError("self-loop on node " + std::to_string(e.u) + " in edge list");
        if (e.u > e.v) std::swap(e.u, e.v);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

// Line reader that skips blank and '#' lines and tracks 1-based line numbers.
class LineReader {
public:
    explicit LineReader(const std::filesystem::path& path) : path_(path.string()), in_(path) {
        if (!in_) throw ParseError(path_, 0, "cannot open file");
    }

    bool next(std::string_view& out) {
        while (std::getline(in_, buf_)) {
            ++line_;
            if (!buf_.empty() && buf_.back() == '\r') buf_.pop_back();
            const auto first = buf_.find_first_not_of(" \t");
            if (first == std::string::npos || buf_[first] == '#') continue;
            out = std::string_view(buf_).substr(first);
            return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_, what); }
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
    std::ifstream in_;
    std::string buf_;
    std::size_t line_ = 0;
};

std::string_view next_token(std::string_view& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) {
        s = {};
        return {};
    }
    s.remove_prefix(b);
    const auto e = s.find_first_of(" \t");
    std::string_view tok = s.substr(0, e);
    s.remove_prefix(e == std::string_view::npos ? s.size() : e);
    return tok;
}

template <class T>
bool parse_number(std::string_view tok, T& out) {
    if (tok.empty()) return false;
    if (tok.front() == '+') tok.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return ec == std::errc() && ptr == tok.data() + tok.size();
}

}  // namespace

std::vector<std::size_t> mask_indices(const NodeMask& mask) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) idx.push_back(i);
    }
    return idx;
}

CsrMatrix normalized_adjacency(std::size_t num_nodes, const std::vector<Edge>& edges) {
    std::vector<double> degree(num_nodes, 1.0);  // self-loop from A + I
    for (const Edge& e : edges) {
        degree[e.u] += 1.0;
        degree[e.v] += 1.0;
    }
    std::vector<double> inv_sqrt(num_nodes);
    for (std::size_t i = 0; i < num_nodes; ++i) inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);

    std::vector<Triplet> t;
    t.reserve(num_nodes + 2 * edges.size());
    for (std::size_t i = 0; i < num_nodes; ++i) t.push_back({i, i, inv_sqrt[i] * inv_sqrt[i]});
    for (const Edge& e : edges) {
        const double w = inv_sqrt[e.u] * inv_sqrt[e.v];
        t.push_back({e.u, e.v, w});
        t.push_back({e.v, e.u, w});
    }
    return CsrMatrix::from_triplets(num_nodes, num_nodes, std::move(t));
}

Graph::Graph(std::size_t num_nodes, std::vector<Edge> edges, DenseMatrix features, std::vector<int> labels,
             std::vector<Split> splits)
    : num_nodes_(num_nodes),
      edges_(canonical_edges(num_nodes, std::move(edges))),
      features_(std::move(features)),
      labels_(std::move(labels)),
      splits_(std::move(splits)) {
    if (num_nodes_ == 0) throw IntegrityError("graph must have at least one node");
    if (features_.rows() != num_nodes_) {
        throw IntegrityError("feature matrix has " + std::to_string(features_.rows()) + " rows, expected " +
                             std::to_string(num_nodes_));
    }
    if (!features_.all_finite()) throw IntegrityError("feature matrix contains non-finite values");
    if (labels_.size() != num_nodes_) {
        throw IntegrityError("label count " + std::to_string(labels_.size()) + " does not match " +
                             std::to_string(num_nodes_) + " nodes");
    }
    if (splits_.size() != num_nodes_) {
        throw IntegrityError("mask count " + std::to_string(splits_.size()) + " does not match " +
                             std::to_string(num_nodes_) + " nodes");
    }
    int max_label = -1;
    for (int y : labels_) {
        if (y < 0) throw IntegrityError("negative class label");
        max_label = std::max(max_label, y);
    }
    num_classes_ = static_cast<std::size_t>(max_label + 1);
    train_ = mask(Split::Train);
    val_ = mask(Split::Val);
    test_ = mask(Split::Test);
    norm_adj_ = normalized_adjacency(num_nodes_, edges_);
    norm_adj_t_ = transpose(norm_adj_);
}

NodeMask Graph::mask(Split which) const {
    NodeMask m(num_nodes_, false);
    for (std::size_t i = 0; i < num_nodes_; ++i) m[i] = splits_[i] == which;
    return m;
}

CsrMatrix normalized_adjacency(const Graph& g) { return g.norm_adj(); }

DatasetStats dataset_stats(const Graph& g) {
    DatasetStats s;
    s.num_nodes = g.num_nodes();
    s.num_edges = g.edges().size();
    s.num_classes = g.num_classes();
    s.avg_degree = 2.0 * static_cast<double>(s.num_edges) / static_cast<double>(s.num_nodes);
    return s;
}

std::optional<DatasetStats> reference_stats(std::string_view name) {
    auto make = [](std::size_t n, std::size_t e, std::size_t k) {
        return DatasetStats{n, e, k, 2.0 * static_cast<double>(e) / static_cast<double>(n)};
    };
    if (name == "cora") return make(2708, 5278, 7);
    if (name == "citeseer") return make(3327, 4552, 6);
    if (name == "chameleon") return make(890, 8854, 5);
    if (name == "squirrel") return make(2223, 46998, 5);
    return std::nullopt;
}

DatasetFiles DatasetFiles::in_directory(const std::filesystem::path& dir) {
    return {dir / "edges.tsv", dir / "features.txt", dir / "labels.txt", dir / "masks.txt"};
}

Graph load_dataset(const DatasetFiles& files, std::optional<std::string> validate_as) {
    std::string_view line;

    LineReader feat(files.features);
    if (!feat.next(line)) feat.fail("missing \"N d\" header");
    std::size_t n = 0, d = 0;
    {
        std::string_view rest = line;
        if (!parse_number(next_token(rest), n) || !parse_number(next_token(rest), d) ||
            !next_token(rest).empty()) {
            feat.fail("header must be \"N d\"");
        }
    }
    DenseMatrix features(n, d);
    std::size_t row = 0;
    while (feat.next(line)) {
        if (row >= n) feat.fail("more than N feature rows");
        std::string_view rest = line;
        for (std::size_t j = 0; j < d; ++j) {
            double v = 0.0;
            if (!parse_number(next_token(rest), v)) feat.fail("expected " + std::to_string(d) + " real values");
            features(row, j) = v;
        }
        if (!next_token(rest).empty()) feat.fail("trailing values on feature row");
        ++row;
    }
    if (row != n) throw IntegrityError(feat.path() + ": header declares " + std::to_string(n) + " rows, found " +
                                       std::to_string(row));

    LineReader lab(files.labels);
    std::vector<int> labels;
    labels.reserve(n);
    while (lab.next(line)) {
        std::string_view rest = line;
        int y = 0;
        if (!parse_number(next_token(rest), y) || !next_token(rest).empty()) lab.fail("expected one integer label");
        if (y < 0) lab.fail("negative label");
        labels.push_back(y);
    }

    LineReader msk(files.masks);
    std::vector<Split> splits;
    splits.reserve(n);
    while (msk.next(line)) {
        std::string_view rest = line;
        const auto tok = next_token(rest);
        if (tok.size() != 1 || !next_token(rest).empty()) msk.fail("expected one of t, v, s, -");
        switch (tok.front()) {
            case 't': splits.push_back(Split::Train); break;
            case 'v': splits.push_back(Split::Val); break;
            case 's': splits.push_back(Split::Test); break;
            case '-': splits.push_back(Split::Unused); break;
            default: msk.fail("expected one of t, v, s, -");
        }
    }

    LineReader edg(files.edges);
    std::vector<Edge> edges;
    while (edg.next(line)) {
        std::string_view rest = line;
        std::size_t u = 0, v = 0;
        if (!parse_number(next_token(rest), u) || !parse_number(next_token(rest), v) || !next_token(rest).empty()) {
            edg.fail("expected \"u<TAB>v\"");
        }
        if (u == v) edg.fail("self-loop " + std::to_string(u));
        if (u >= n || v >= n) {
            throw IntegrityError(edg.path() + ": edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                 ") exceeds node count " + std::to_string(n));
        }
        edges.push_back({u, v});
    }

    if (labels.size() != n) {
        throw IntegrityError(lab.path() + ": " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                             " nodes");
    }
    if (splits.size() != n) {
        throw IntegrityError(msk.path() + ": " + std::to_string(splits.size()) + " mask entries for " +
                             std::to_string(n) + " nodes");
    }

    Graph g(n, std::move(edges), std::move(features), std::move(labels), std::move(splits));
    if (validate_as) {
        const auto ref = reference_stats(*validate_as);
        if (!ref) throw IntegrityError("no reference statistics for dataset '" + *validate_as + "'");
        const DatasetStats got = dataset_stats(g);
        if (got.num_nodes != ref->num_nodes || got.num_edges != ref->num_edges ||
            got.num_classes != ref->num_classes) {
            std::ostringstream msg;
            msg << *validate_as << ": expected " << ref->num_nodes << " nodes / " << ref->num_edges << " edges / "
                << ref->num_classes << " classes, files have " << got.num_nodes << " / " << got.num_edges << " / "
                << got.num_classes;
            throw IntegrityError(msg.str());
        }
    }
    return g;
}

void write_dataset(const Graph& g, const DatasetFiles& files) {
    {
        std::ofstream out(files.edges);
        for (const Edge& e : g.edges()) out << e.u << '\t' << e.v << '\n';
    }
    {
        std::ofstream out(files.features);
        out << g.num_nodes() << ' ' << g.features().cols() << '\n';
        out << std::setprecision(std::numeric_limits<double>::max_digits10);
        for (std::size_t i = 0; i < g.num_nodes(); ++i) {
            const auto r = g.features().row(i);
            for (std::size_t j = 0; j < r.size(); ++j) out << (j ? " " : "") << r[j];
            out << '\n';
        }
    }
    {
        std::ofstream out(files.labels);
        for (int y : g.labels()) out << y << '\n';
    }
    {
        std::ofstream out(files.masks);
        for (Split s : g.splits()) out << static_cast<char>(s) << '\n';
    }
}

Graph sbm_generate(const SbmParams& p) {
    if (p.blocks == 0 || p.per_block == 0) throw std::invalid_argument("sbm_generate: counts must be >= 1");
    if (!(p.p_in >= 0.0 && p.p_in <= 1.0 && p.p_out >= 0.0 && p.p_out <= 1.0)) {
        throw std::invalid_argument("sbm_generate: probabilities must lie in [0, 1]");
    }
    const std::size_t n = p.blocks * p.per_block;
    Rng rng(p.seed);

    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double prob = (i / p.per_block == j / p.per_block) ? p.p_in : p.p_out;
            if (rng.uniform() < prob) edges.push_back({i, j});
        }
    }
    DenseMatrix features = rng.normal_matrix(n, p.feat_dim);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i / p.per_block);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t n_train = n * 6 / 10;
    const std::size_t n_val = n * 2 / 10;
    std::vector<Split> splits(n, Split::Test);
    for (std::size_t k = 0; k < n; ++k) {
        splits[order[k]] = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);
    }
    return Graph(n, std::move(edges), std::move(features), std::move(labels), std::move(splits));
}

GraphProperties graph_properties(std::size_t num_nodes, const std::vector<Edge>& edges) {
    std::vector<std::vector<std::size_t>> nbrs(num_nodes);
    for (const Edge& e : edges) {
        if (e.u == e.v) continue;
        nbrs[e.u].push_back(e.v);
        nbrs[e.v].push_back(e.u);
    }
    std::vector<int> color(num_nodes, -1);
    GraphProperties props{true, true};
    std::size_t components = 0;
    for (std::size_t s = 0; s < num_nodes; ++s) {
        if (color[s] != -1) continue;
        ++components;
        color[s] = 0;
        std::deque<std::size_t> queue{s};
        while (!queue.empty()) {
            const std::size_t x = queue.front();
            queue.pop_front();
            for (std::size_t y : nbrs[x]) {
                if (color[y] == -1) {
                    color[y] = 1 - color[x];
                    queue.push_back(y);
                } else if (color[y] == color[x]) {
                    props.bipartite = false;
                }
            }
        }
    }
    props.connected = components <= 1;
    return props;
}

GraphProperties graph_properties(const Graph& g) { return graph_properties(g.num_nodes(), g.edges()); }

}  // namespace gradflow
