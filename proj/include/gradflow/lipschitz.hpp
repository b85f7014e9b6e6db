#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "gradflow/linalg.hpp"
#include "gradflow/model.hpp"

namespace gradflow {

/// c·W/‖W‖_F. A zero matrix is returned unchanged with a warning.
DenseMatrix frobenius_normalize(const DenseMatrix& w, double c);

/// Normalizes every hidden-layer weight in place. The input projection and
/// readout are left alone.
void apply_to_model(Model& model, double c);

enum class Regime { Smoothing, ExpansionRisk };

struct LipschitzReport {
    std::vector<double> frobenius;  ///< per hidden layer
    std::vector<double> spectral;   ///< per hidden layer
    std::optional<double> c;
    double q_hat = 0.0;  ///< ‖B Âᵀ‖
    double max_spectral = 0.0;
    double product_bound = 0.0;  ///< q_hat · max_spectral
    Regime regime = Regime::Smoothing;
};

/// Per-layer norms and the smoothing/expansion regime implied by
/// q̂·max‖W^(ℓ)‖₂ relative to 1.
LipschitzReport diagnose(const Model& model, const CsrMatrix& adj);

/// One row per hidden layer: `layer,frobenius,spectral,c,q_hat,product_bound,regime`.
void write_lipschitz_csv(std::ostream& out, const LipschitzReport& report);

const char* to_string(Regime r);

}  // namespace gradflow
