#include "gradflow/model.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>

#include "gradflow/errors.hpp"
#include "gradflow/format.hpp"
#include "gradflow/rng.hpp"

namespace gradflow {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

DenseMatrix glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return rng.uniform_matrix(fan_in, fan_out, -limit, limit);
}

void apply_activation(DenseMatrix& m, const Activation& act) {
    if (act.kind == ActivationKind::Identity) return;
    for (double& v : m.values()) v = act.apply(v);
}

}  // namespace

double Activation::apply(double z) const {
    switch (kind) {
        case ActivationKind::Identity: return z;
        case ActivationKind::Relu: return z > 0.0 ? z : 0.0;
        case ActivationKind::LeakyRelu: return z > 0.0 ? z : slope * z;
        case ActivationKind::Gelu: return z * normal_cdf(z);
    }
    return z;
}

double Activation::derivative(double z) const {
    switch (kind) {
        case ActivationKind::Identity: return 1.0;
        case ActivationKind::Relu: return z > 0.0 ? 1.0 : 0.0;
        case ActivationKind::LeakyRelu: return z > 0.0 ? 1.0 : slope;
        case ActivationKind::Gelu: return normal_cdf(z) + z * normal_pdf(z);
    }
    return 1.0;
}

Activation parse_activation(std::string_view name) {
    if (name == "identity" || name == "linear") return Activation::identity();
    if (name == "relu") return Activation::relu();
    if (name == "gelu") return Activation::gelu();
    if (name == "leaky_relu") return Activation::leaky_relu(0.8);
    constexpr std::string_view prefix = "leaky_relu:";
    if (name.starts_with(prefix)) {
        const std::string_view num = name.substr(prefix.size());
        double slope = 0.0;
        const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), slope);
        if (ec == std::errc() && ptr == num.data() + num.size()) return Activation::leaky_relu(slope);
    }
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string to_string(const Activation& a) {
    switch (a.kind) {
        case ActivationKind::Identity: return "identity";
        case ActivationKind::Relu: return "relu";
        case ActivationKind::LeakyRelu: return "leaky_relu:" + format_double(a.slope);
        case ActivationKind::Gelu: return "gelu";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (depth < 1) throw ConfigError("model depth must be >= 1");
    if (hidden_dim < 1 || in_dim < 1 || num_classes < 1) throw ConfigError("model dimensions must be >= 1");
    if (activation.kind == ActivationKind::LeakyRelu && !(activation.slope > 0.0 && activation.slope <= 1.0)) {
        throw ConfigError("leaky_relu slope must lie in (0, 1]");
    }
    if (lipschitz_c && !(*lipschitz_c > 0.0)) throw ConfigError("lipschitz bound c must be > 0");
}

Model Model::init(const ModelConfig& config) {
    config.validate();
    Model m;
    m.config = config;
    Rng rng(config.seed);
    m.input_proj = glorot(rng, config.in_dim, config.hidden_dim);
    m.layers.reserve(config.depth);
    for (std::size_t l = 0; l < config.depth; ++l) {
        m.layers.push_back(glorot(rng, config.hidden_dim, config.hidden_dim));
    }
    m.readout = glorot(rng, config.hidden_dim, config.num_classes);
    return m;
}

bool Model::weights_finite() const {
    if (!input_proj.all_finite() || !readout.all_finite()) return false;
    for (const auto& w : layers) {
        if (!w.all_finite()) return false;
    }
    return true;
}

Tape forward(const Model& model, const CsrMatrix& adj, const DenseMatrix& features) {
    if (features.cols() != model.input_proj.rows()) {
        throw ShapeError("forward: features have " + std::to_string(features.cols()) + " columns, model expects " +
                         std::to_string(model.input_proj.rows()));
    }
    const Activation& act = model.config.activation;
    const std::size_t depth = model.depth();
    Tape tape;
    tape.x.reserve(depth + 1);
    tape.pre.reserve(depth);

    tape.x.push_back(matmul(features, model.input_proj));
    if (!tape.x.back().all_finite()) throw ForwardDivergence(0);
    for (std::size_t l = 0; l < depth; ++l) {
        DenseMatrix z = matmul(spmm(adj, tape.x[l]), model.layers[l]);
        DenseMatrix next = z;
        apply_activation(next, act);
        if (model.config.residual) next += tape.x[l];
        if (!next.all_finite()) throw ForwardDivergence(l + 1);
        tape.pre.push_back(std::move(z));
        tape.x.push_back(std::move(next));
    }
    tape.logits = matmul(tape.x.back(), model.readout);
    if (!tape.logits.all_finite()) throw ForwardDivergence(depth + 1);
    return tape;
}

Tape forward(const Model& model, const Graph& graph) { return forward(model, graph.norm_adj(), graph.features()); }

void backward(Tape& tape, const Model& model, const CsrMatrix& adj, const CsrMatrix& adj_t,
              const DenseMatrix& features, const DenseMatrix& grad_logits) {
    const std::size_t depth = model.depth();
    if (tape.x.size() != depth + 1 || tape.pre.size() != depth) throw StateError("backward: forward pass missing");
    if (grad_logits.rows() != tape.logits.rows() || grad_logits.cols() != tape.logits.cols()) {
        throw ShapeError("backward: loss gradient shape does not match logits");
    }
    const Activation& act = model.config.activation;

    tape.grad_logits = grad_logits;
    tape.grad_readout = matmul(transpose(tape.x[depth]), grad_logits);
    tape.grad_x.assign(depth + 1, DenseMatrix());
    tape.grad_w.assign(depth, DenseMatrix());
    tape.grad_x[depth] = matmul(grad_logits, transpose(model.readout));

    for (std::size_t l = depth; l-- > 0;) {
        const DenseMatrix& upstream = tape.grad_x[l + 1];
        DenseMatrix g_pre = upstream;
        if (act.kind != ActivationKind::Identity) {
            const auto z = tape.pre[l].values();
            auto g = g_pre.values();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= act.derivative(z[i]);
        }
        tape.grad_w[l] = matmul(transpose(spmm(adj, tape.x[l])), g_pre);
        DenseMatrix gx = spmm(adj_t, matmul(g_pre, transpose(model.layers[l])));
        if (model.config.residual) gx += upstream;
        tape.grad_x[l] = std::move(gx);
    }
    tape.grad_input_proj = matmul(transpose(features), tape.grad_x[0]);
    tape.has_backward = true;
}

void backward(Tape& tape, const Model& model, const Graph& graph, const DenseMatrix& grad_logits) {
    backward(tape, model, graph.norm_adj(), graph.norm_adj_t(), graph.features(), grad_logits);
}

LossResult masked_cross_entropy(const DenseMatrix& logits, const std::vector<int>& labels, const NodeMask& mask) {
    if (labels.size() != logits.rows() || mask.size() != logits.rows()) {
        throw ShapeError("masked_cross_entropy: labels/mask length must equal logits rows");
    }
    std::size_t count = 0;
    for (bool b : mask) count += b ? 1 : 0;
    if (count == 0) throw std::invalid_argument("masked_cross_entropy: empty mask");

    const double inv = 1.0 / static_cast<double>(count);
    LossResult res;
    res.grad = DenseMatrix(logits.rows(), logits.cols());
    const std::size_t k = logits.cols();
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (!mask[i]) continue;
        const auto row = logits.row(i);
        const auto y = static_cast<std::size_t>(labels[i]);
        if (y >= k) throw std::out_of_range("masked_cross_entropy: label exceeds class count");
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - mx);
        const double log_z = mx + std::log(sum);
        res.loss += (log_z - row[y]) * inv;
        auto g = res.grad.row(i);
        for (std::size_t c = 0; c < k; ++c) g[c] = std::exp(row[c] - log_z) * inv;
        g[y] -= inv;
    }
    return res;
}

double evaluate(const DenseMatrix& logits, const std::vector<int>& labels, const NodeMask& mask) {
    if (labels.size() != logits.rows() || mask.size() != logits.rows()) {
        throw ShapeError("evaluate: labels/mask length must equal logits rows");
    }
    std::size_t total = 0, correct = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (!mask[i]) continue;
        ++total;
        const auto row = logits.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c) {
            if (row[c] > row[best]) best = c;
        }
        if (static_cast<int>(best) == labels[i]) ++correct;
    }
    if (total == 0) throw std::invalid_argument("evaluate: empty mask");
    return static_cast<double>(correct) / static_cast<double>(total);
}

double evaluate(const Model& model, const Graph& graph, const NodeMask& mask) {
    return evaluate(forward(model, graph).logits, graph.labels(), mask);
}

// Checkpoint encoding.

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'R', 'A', 'D', 'F', 'L', 'O', 'W'};
constexpr std::uint32_t kCheckpointVersion = 1;

class ByteWriter {
public:
    explicit ByteWriter(std::ofstream& out) : out_(out) {}
    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
    void matrix(const DenseMatrix& m) {
        u64(m.rows());
        u64(m.cols());
        for (double v : m.values()) f64(v);
    }

private:
    void le(std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    std::ofstream& out_;
};

class ByteReader {
public:
    ByteReader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() { return std::bit_cast<double>(le(8)); }
    DenseMatrix matrix() {
        const std::uint64_t r = u64();
        const std::uint64_t c = u64();
        if (r > (1ull << 32) || c > (1ull << 32)) throw ParseError(path_, 0, "implausible matrix dimensions");
        DenseMatrix m(r, c);
        for (double& v : m.values()) v = f64();
        return m;
    }

private:
    std::uint64_t le(int bytes) {
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) {
            const int ch = in_.get();
            if (ch == std::char_traits<char>::eof()) throw ParseError(path_, 0, "truncated checkpoint");
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(ch)) << (8 * i);
        }
        return v;
    }
    std::ifstream& in_;
    std::string path_;
};

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    ByteWriter w(out);
    for (char ch : kMagic) w.u8(static_cast<std::uint8_t>(ch));
    w.u32(kCheckpointVersion);
    const ModelConfig& c = model.config;
    w.u64(c.depth);
    w.u64(c.hidden_dim);
    w.u64(c.in_dim);
    w.u64(c.num_classes);
    w.u8(static_cast<std::uint8_t>(c.activation.kind));
    w.f64(c.activation.slope);
    w.u8(c.residual ? 1 : 0);
    w.u8(c.lipschitz_c ? 1 : 0);
    w.f64(c.lipschitz_c.value_or(0.0));
    w.u64(c.seed);
    w.matrix(model.input_proj);
    for (const auto& layer : model.layers) w.matrix(layer);
    w.matrix(model.readout);
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string(), 0, "cannot open checkpoint");
    ByteReader r(in, path.string());
    for (char ch : kMagic) {
        if (r.u8() != static_cast<std::uint8_t>(ch)) throw ParseError(path.string(), 0, "bad checkpoint magic");
    }
    if (r.u32() != kCheckpointVersion) throw ParseError(path.string(), 0, "unsupported checkpoint version");
    Model m;
    ModelConfig& c = m.config;
    c.depth = r.u64();
    c.hidden_dim = r.u64();
    c.in_dim = r.u64();
    c.num_classes = r.u64();
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(ActivationKind::Gelu)) throw ParseError(path.string(), 0, "bad activation");
    c.activation.kind = static_cast<ActivationKind>(kind);
    c.activation.slope = r.f64();
    c.residual = r.u8() != 0;
    const bool has_c = r.u8() != 0;
    const double cval = r.f64();
    if (has_c) c.lipschitz_c = cval;
    c.seed = r.u64();
    c.validate();
    m.input_proj = r.matrix();
    for (std::size_t l = 0; l < c.depth; ++l) m.layers.push_back(r.matrix());
    m.readout = r.matrix();
    if (m.input_proj.rows() != c.in_dim || m.input_proj.cols() != c.hidden_dim || m.readout.rows() != c.hidden_dim ||
        m.readout.cols() != c.num_classes) {
        throw ParseError(path.string(), 0, "checkpoint weight shapes disagree with config");
    }
    for (const auto& w : m.layers) {
        if (w.rows() != c.hidden_dim || w.cols() != c.hidden_dim) {
            throw ParseError(path.string(), 0, "checkpoint hidden layer shape disagrees with config");
        }
    }
    return m;
}

}  // namespace gradflow
