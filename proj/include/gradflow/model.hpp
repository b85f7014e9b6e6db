#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gradflow/graph.hpp"
#include "gradflow/linalg.hpp"

namespace gradflow {

enum class ActivationKind : std::uint8_t { Identity = 0, Relu = 1, LeakyRelu = 2, Gelu = 3 };

struct Activation {
    ActivationKind kind = ActivationKind::Relu;
    double slope = 0.01;  ///< negative-side slope, LeakyRelu only

    static Activation identity() { return {ActivationKind::Identity, 0.0}; }
    static Activation relu() { return {ActivationKind::Relu, 0.0}; }
    static Activation leaky_relu(double slope) { return {ActivationKind::LeakyRelu, slope}; }
    static Activation gelu() { return {ActivationKind::Gelu, 0.0}; }

    double apply(double z) const;
    /// relu'(0) = 0; leaky_relu'(0) = slope; gelu uses the exact erf form.
    double derivative(double z) const;

    friend bool operator==(const Activation&, const Activation&) = default;
};

/// "identity", "relu", "gelu", "leaky_relu" (slope 0.8) or "leaky_relu:<slope>".
Activation parse_activation(std::string_view name);
std::string to_string(const Activation& a);

struct ModelConfig {
    std::size_t depth = 2;  ///< number of hidden GCN layers L
    std::size_t hidden_dim = 64;
    std::size_t in_dim = 0;
    std::size_t num_classes = 0;
    Activation activation = Activation::relu();
    bool residual = false;
    std::optional<double> lipschitz_c;
    std::uint64_t seed = 0;

    /// Throws ConfigError when an invariant is violated.
    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Linear input projection, L hidden GCN layers, linear readout.
struct Model {
    ModelConfig config;
    DenseMatrix input_proj;           ///< in_dim × hidden
    std::vector<DenseMatrix> layers;  ///< W^(0..L−1), hidden × hidden
    DenseMatrix readout;              ///< hidden × num_classes

    /// Glorot-uniform weights from `config.seed`.
    static Model init(const ModelConfig& config);

    std::size_t depth() const noexcept { return layers.size(); }
    bool weights_finite() const;
};

/// Forward intermediates and, after `backward`, gradients for one evaluation.
struct Tape {
    std::vector<DenseMatrix> x;    ///< X^(0..L)
    std::vector<DenseMatrix> pre;  ///< Z^(ℓ) = ÂX^(ℓ)W^(ℓ), ℓ = 0..L−1
    DenseMatrix logits;

    bool has_backward = false;
    DenseMatrix grad_logits;
    std::vector<DenseMatrix> grad_x;  ///< ∂L/∂X^(0..L)
    std::vector<DenseMatrix> grad_w;  ///< ∂L/∂W^(0..L−1)
    DenseMatrix grad_readout;
    DenseMatrix grad_input_proj;
};

/// Throws ForwardDivergence naming the first layer with a non-finite value
/// (0 = input projection, ℓ+1 = output of hidden layer ℓ, L+1 = logits).
Tape forward(const Model& model, const CsrMatrix& adj, const DenseMatrix& features);
Tape forward(const Model& model, const Graph& graph);

/// Reverse pass from `grad_logits`. `adj_t` is Âᵀ. Non-finite values propagate.
void backward(Tape& tape, const Model& model, const CsrMatrix& adj, const CsrMatrix& adj_t,
              const DenseMatrix& features, const DenseMatrix& grad_logits);
void backward(Tape& tape, const Model& model, const Graph& graph, const DenseMatrix& grad_logits);

struct LossResult {
    double loss = 0.0;
    DenseMatrix grad;  ///< ∂loss/∂logits, zero outside the mask
};

/// Mean softmax cross-entropy over masked rows.
LossResult masked_cross_entropy(const DenseMatrix& logits, const std::vector<int>& labels, const NodeMask& mask);

/// Fraction of masked rows whose argmax (lowest index on ties) equals the label.
double evaluate(const DenseMatrix& logits, const std::vector<int>& labels, const NodeMask& mask);
double evaluate(const Model& model, const Graph& graph, const NodeMask& mask);

/// Little-endian binary checkpoint: magic, config block, then every weight
/// matrix as u64 rows, u64 cols and row-major f64 data.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace gradflow
