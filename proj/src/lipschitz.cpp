#include "gradflow/lipschitz.hpp"

#include <ostream>
#include <stdexcept>

#include "gradflow/diagnostics.hpp"
#include "gradflow/format.hpp"

namespace gradflow {

DenseMatrix frobenius_normalize(const DenseMatrix& w, double c) {
    if (!(c > 0.0)) throw std::invalid_argument("frobenius_normalize: c must be > 0");
    const double norm = frobenius_norm(w);
    if (norm == 0.0) {
        warn("frobenius_normalize: zero matrix left unchanged");
        return w;
    }
    return (c / norm) * w;
}

void apply_to_model(Model& model, double c) {
    if (!(c > 0.0)) throw std::invalid_argument("apply_to_model: c must be > 0");
    for (DenseMatrix& w : model.layers) w = frobenius_normalize(w, c);
}

LipschitzReport diagnose(const Model& model, const CsrMatrix& adj) {
    LipschitzReport r;
    r.c = model.config.lipschitz_c;
    for (const DenseMatrix& w : model.layers) {
        r.frobenius.push_back(frobenius_norm(w));
        const NormEstimate s = spectral_norm(w);
        if (!s.converged) warn("diagnose: spectral norm did not converge");
        r.spectral.push_back(s.value);
        r.max_spectral = std::max(r.max_spectral, s.value);
    }
    const NormEstimate q = b_power_norm(adj, 1);
    if (!q.converged) warn("diagnose: ||B A^T|| did not converge");
    r.q_hat = q.value;
    r.product_bound = r.q_hat * r.max_spectral;
    r.regime = r.product_bound < 1.0 ? Regime::Smoothing : Regime::ExpansionRisk;
    return r;
}

const char* to_string(Regime r) { return r == Regime::Smoothing ? "smoothing" : "expansion_risk"; }

void write_lipschitz_csv(std::ostream& out, const LipschitzReport& report) {
    out << "layer,frobenius,spectral,c,q_hat,product_bound,regime\n";
    const std::string c = report.c ? format_double(*report.c) : "none";
    for (std::size_t l = 0; l < report.frobenius.size(); ++l) {
        out << l << ',' << format_double(report.frobenius[l]) << ',' << format_double(report.spectral[l]) << ','
            << c << ',' << format_double(report.q_hat) << ',' << format_double(report.product_bound) << ','
            << to_string(report.regime) << '\n';
    }
}

}  // namespace gradflow
