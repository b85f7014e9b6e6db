#include "gradflow/closed_form.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "gradflow/diagnostics.hpp"
#include "gradflow/errors.hpp"
#include "gradflow/format.hpp"
#include "gradflow/similarity.hpp"

namespace gradflow {
namespace {

void check_chain(std::size_t layer, std::span<const DenseMatrix> weights, const CsrMatrix& adj,
                 const DenseMatrix& g_last, const char* op) {
    if (layer > weights.size()) {
        throw ShapeError(std::string(op) + ": layer " + std::to_string(layer) + " exceeds depth " +
                         std::to_string(weights.size()));
    }
    if (adj.rows() != adj.cols() || adj.rows() != g_last.rows()) {
        throw ShapeError(std::string(op) + ": adjacency and gradient row counts disagree");
    }
    for (const DenseMatrix& w : weights) {
        if (w.rows() != w.cols() || w.rows() != g_last.cols()) {
            throw ShapeError(std::string(op) + ": weights must be square with the gradient's width");
        }
    }
}

DenseMatrix propagate_t(const CsrMatrix& adj_t, DenseMatrix m, std::size_t times) {
    for (std::size_t i = 0; i < times; ++i) m = spmm(adj_t, m);
    return m;
}

double chain_max_spectral(std::span<const DenseMatrix> weights, std::size_t layer) {
    double w = 0.0;
    for (std::size_t i = layer; i < weights.size(); ++i) {
        const NormEstimate est = spectral_norm(weights[i], 1e-12);
        if (!est.converged) warn("spectral norm of W^(" + std::to_string(i) + ") did not converge");
        w = std::max(w, est.value);
    }
    return w;
}

double checked_b_power_norm(const CsrMatrix& adj, std::size_t k) {
    const NormEstimate est = b_power_norm(adj, k, 1e-13, 100'000);
    if (!est.converged) warn("b_power_norm(k=" + std::to_string(k) + ") did not converge");
    return est.value;
}

void warn_assumptions(const GraphProperties& props, const char* op) {
    if (!props.connected || props.bipartite) {
        warn(std::string(op) + ": graph is " + (props.connected ? "" : "disconnected ") +
             (props.bipartite ? "bipartite" : "") + "; the decay assumptions do not hold");
    }
}

}  // namespace

double binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    k = std::min(k, n - k);
    double c = 1.0;
    for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    return std::round(c);
}

DenseMatrix lgn_input_gradient(std::size_t layer, std::span<const DenseMatrix> weights, const CsrMatrix& adj,
                               const DenseMatrix& g_last) {
    check_chain(layer, weights, adj, g_last, "lgn_input_gradient");
    const std::size_t steps = weights.size() - layer;
    DenseMatrix out = propagate_t(transpose(adj), g_last, steps);
    for (std::size_t i = 1; i <= steps; ++i) out = matmul(out, transpose(weights[weights.size() - i]));
    return out;
}

DenseMatrix lgn_weight_gradient(const DenseMatrix& x_layer, const CsrMatrix& adj, const DenseMatrix& grad_next) {
    if (adj.cols() != x_layer.rows() || adj.rows() != grad_next.rows()) {
        throw ShapeError("lgn_weight_gradient: node counts disagree");
    }
    return matmul(transpose(spmm(adj, x_layer)), grad_next);
}

PathSum reslgn_input_gradient(std::size_t layer, std::span<const DenseMatrix> weights, const CsrMatrix& adj,
                              const DenseMatrix& g_last) {
    check_chain(layer, weights, adj, g_last, "reslgn_input_gradient");
    const std::size_t steps = weights.size() - layer;
    if (steps > kPathEnumerationCap) {
        throw DepthCapError("reslgn_input_gradient: L - l = " + std::to_string(steps) +
                            " exceeds the path enumeration cap of " + std::to_string(kPathEnumerationCap) +
                            " (2^" + std::to_string(steps) + " monomials)");
    }
    const CsrMatrix adj_t = transpose(adj);
    // (Âᵀ)^p G for p = 0..steps, shared by every subset of size p.
    std::vector<DenseMatrix> powers;
    powers.reserve(steps + 1);
    powers.push_back(g_last);
    for (std::size_t p = 1; p <= steps; ++p) powers.push_back(spmm(adj_t, powers.back()));

    PathSum result;
    result.gradient = DenseMatrix(g_last.rows(), g_last.cols());
    const std::size_t subsets = std::size_t{1} << steps;
    for (std::size_t mask = 0; mask < subsets; ++mask) {
        // Bit b of `mask` selects layer index ℓ + b. Multiplying from the
        // highest selected index down gives W^(i_p)ᵀ ··· W^(i_1)ᵀ.
        std::size_t p = 0;
        for (std::size_t b = 0; b < steps; ++b) p += (mask >> b) & 1U;
        DenseMatrix term = powers[p];
        for (std::size_t b = steps; b-- > 0;) {
            if ((mask >> b) & 1U) term = matmul(term, transpose(weights[layer + b]));
        }
        result.gradient += term;
        ++result.monomials;
    }
    return result;
}

BoundReport plain_smoothing_bound(std::size_t layer, std::span<const DenseMatrix> weights, const CsrMatrix& adj,
                           const DenseMatrix& g_last, const GraphProperties& props) {
    warn_assumptions(props, "plain_smoothing_bound");
    BoundReport r;
    r.layer = layer;
    r.assumptions_hold = props.connected && !props.bipartite;
    r.lhs = node_similarity(lgn_input_gradient(layer, weights, adj, g_last));
    const std::size_t steps = weights.size() - layer;
    r.max_w_spectral = chain_max_spectral(weights, layer);
    r.rhs = frobenius_norm(g_last) * checked_b_power_norm(adj, steps) *
            std::pow(r.max_w_spectral, static_cast<double>(steps));
    r.satisfied = r.lhs <= r.rhs * (1.0 + kBoundSlack);
    return r;
}

BoundReport residual_smoothing_bound(std::size_t layer, std::span<const DenseMatrix> weights, const CsrMatrix& adj,
                           const DenseMatrix& g_last, const GraphProperties& props) {
    warn_assumptions(props, "residual_smoothing_bound");
    BoundReport r;
    r.layer = layer;
    r.assumptions_hold = props.connected && !props.bipartite;
    r.lhs = node_similarity(reslgn_input_gradient(layer, weights, adj, g_last).gradient);
    const std::size_t steps = weights.size() - layer;
    r.max_w_spectral = chain_max_spectral(weights, layer);

    const double g_norm = frobenius_norm(g_last);
    const double mu_g = node_similarity(g_last);
    std::vector<double> b_norms(steps + 1, 0.0);
    r.rhs = mu_g;
    for (std::size_t p = 1; p <= steps; ++p) {
        b_norms[p] = checked_b_power_norm(adj, p);
        const double term =
            binomial(steps, p) * g_norm * b_norms[p] * std::pow(r.max_w_spectral, static_cast<double>(p));
        r.terms.push_back(term);
        r.rhs += term;
    }
    r.satisfied = r.lhs <= r.rhs * (1.0 + kBoundSlack);

    // Envelope ‖B(Âᵀ)^k‖ ≤ C q^k: q from a log-linear fit, C the smallest
    // constant that makes it an upper bound on the computed norms.
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 1; k <= steps; ++k) {
        if (b_norms[k] > 0.0) pts.emplace_back(static_cast<double>(k), std::log(b_norms[k]));
    }
    if (!pts.empty()) {
        double q = 0.0;
        if (pts.size() >= 2) {
            double mx = 0.0, my = 0.0;
            for (auto [x, y] : pts) {
                mx += x;
                my += y;
            }
            mx /= static_cast<double>(pts.size());
            my /= static_cast<double>(pts.size());
            double sxx = 0.0, sxy = 0.0;
            for (auto [x, y] : pts) {
                sxx += (x - mx) * (x - mx);
                sxy += (x - mx) * (y - my);
            }
            q = std::exp(sxy / sxx);
        } else {
            q = std::exp(pts.front().second);
        }
        double c = 0.0;
        for (auto [x, y] : pts) c = std::max(c, std::exp(y - x * std::log(q)));
        c *= g_norm;
        r.envelope_q = q;
        r.envelope_c = c;
        r.envelope_rhs = mu_g + c * (std::pow(1.0 + q * r.max_w_spectral, static_cast<double>(steps)) - 1.0);
    }
    return r;
}

void write_bound_csv(std::ostream& out, std::span<const BoundReport> reports) {
    std::size_t width = 0;
    for (const auto& r : reports) width = std::max(width, r.terms.size());
    out << "layer,lhs,rhs,max_w_spectral,satisfied";
    for (std::size_t p = 1; p <= width; ++p) out << ",term_" << p;
    out << '\n';
    for (const auto& r : reports) {
        out << r.layer << ',' << format_double(r.lhs) << ',' << format_double(r.rhs) << ','
            << format_double(r.max_w_spectral) << ',' << (r.satisfied ? 1 : 0);
        for (std::size_t p = 0; p < width; ++p) out << ',' << (p < r.terms.size() ? format_double(r.terms[p]) : "");
        out << '\n';
    }
}

}  // namespace gradflow
