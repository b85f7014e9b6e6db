#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "gradflow/graph.hpp"
#include "gradflow/linalg.hpp"

namespace gradflow {

// Closed-form gradients of linear GCN chains, evaluated directly from the
// formulas rather than by backpropagation. `weights` always holds the full
// chain W^(0..L−1) and `g_last` is ∂L/∂X^(L).

/// (Âᵀ)^{L−ℓ} · G · W^(L−1)ᵀ · W^(L−2)ᵀ ··· W^(ℓ)ᵀ for the plain linear chain.
DenseMatrix lgn_input_gradient(std::size_t layer, std::span<const DenseMatrix> weights, const CsrMatrix& adj,
                               const DenseMatrix& g_last);

/// (ÂX^(ℓ))ᵀ · ∂L/∂X^(ℓ+1).
DenseMatrix lgn_weight_gradient(const DenseMatrix& x_layer, const CsrMatrix& adj, const DenseMatrix& grad_next);

inline constexpr std::size_t kPathEnumerationCap = 12;

struct PathSum {
    DenseMatrix gradient;
    std::size_t monomials = 0;  ///< number of path terms evaluated, 2^{L−ℓ}
};

/// Residual linear chain: sum over every subset ℓ ≤ i_1 < … < i_p < L of
/// (Âᵀ)^p · G · W^(i_p)ᵀ ··· W^(i_1)ᵀ, including the empty subset (G itself).
/// Throws DepthCapError when L − ℓ exceeds kPathEnumerationCap.
PathSum reslgn_input_gradient(std::size_t layer, std::span<const DenseMatrix> weights, const CsrMatrix& adj,
                              const DenseMatrix& g_last);

struct BoundReport {
    std::size_t layer = 0;
    double lhs = 0.0;             ///< μ of the exact gradient at `layer`
    double rhs = 0.0;             ///< computed upper bound
    std::vector<double> terms;    ///< residual bound only: term for p = 1..L−ℓ
    double max_w_spectral = 0.0;  ///< max ‖W^(i)‖₂ over ℓ ≤ i < L
    bool satisfied = false;       ///< lhs ≤ rhs·(1 + 1e-9)
    bool assumptions_hold = true; ///< graph connected and non-bipartite

    // Residual bound only: the envelope form μ(G) + C((1 + q‖W‖)^{L−ℓ} − 1)
    // with q, C taken from a fitted envelope of ‖B(Âᵀ)^k‖.
    std::optional<double> envelope_rhs;
    std::optional<double> envelope_q;
    std::optional<double> envelope_c;
};

inline constexpr double kBoundSlack = 1e-9;

/// μ(∂L/∂X^(ℓ)) ≤ ‖G‖_F · ‖B(Âᵀ)^{L−ℓ}‖ · ‖W^(*)‖^{L−ℓ} for the plain chain.
/// `props` comes from graph_properties; a warning is issued when the graph is
/// disconnected or bipartite.
BoundReport plain_smoothing_bound(std::size_t layer, std::span<const DenseMatrix> weights, const CsrMatrix& adj,
                           const DenseMatrix& g_last, const GraphProperties& props);

/// μ(∂L/∂X^(ℓ)) ≤ μ(G) + Σ_p C(L−ℓ, p) · ‖G‖_F · ‖B(Âᵀ)^p‖ · ‖W^(*)‖^p for the
/// residual chain.
BoundReport residual_smoothing_bound(std::size_t layer, std::span<const DenseMatrix> weights, const CsrMatrix& adj,
                           const DenseMatrix& g_last, const GraphProperties& props);

/// Header `layer,lhs,rhs,max_w_spectral,satisfied,term_1..term_P`; P is the
/// longest term list among `reports`.
void write_bound_csv(std::ostream& out, std::span<const BoundReport> reports);

/// Binomial coefficient as a double.
double binomial(std::size_t n, std::size_t k);

}  // namespace gradflow
