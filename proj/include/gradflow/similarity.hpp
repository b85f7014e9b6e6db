#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "gradflow/linalg.hpp"

namespace gradflow {

struct Tape;

/// μ(X) = ‖X − 1γ_X‖_F. Non-finite input yields a non-finite result.
double node_similarity(const DenseMatrix& x);

enum class ProfileKind { Representation, Gradient };

/// Layer-indexed similarity values, ℓ = 0..L.
struct SimilarityProfile {
    ProfileKind kind = ProfileKind::Gradient;
    std::vector<double> values;
    std::vector<std::size_t> nan_layers;  ///< layers whose μ was NaN or Inf

    std::size_t depth() const noexcept { return values.empty() ? 0 : values.size() - 1; }
};

SimilarityProfile make_profile(ProfileKind kind, std::vector<double> values);

/// μ of every X^(ℓ) or every ∂L/∂X^(ℓ) held by the tape. Throws StateError
/// for a gradient profile when the tape has no backward pass.
SimilarityProfile similarity_profile(const Tape& tape, ProfileKind kind);

/// Least-squares line through (L − ℓ, log μ_ℓ) over finite positive values.
/// A negative slope means μ shrinks toward the input layer.
struct DecayFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t first_layer = 0;  ///< smallest ℓ used
    std::size_t last_layer = 0;   ///< largest ℓ used
    std::size_t points = 0;
};

DecayFit fit_decay(const SimilarityProfile& profile);

/// CSV with header `layer,value,is_nan`.
void write_profile_csv(std::ostream& out, const SimilarityProfile& profile);

}  // namespace gradflow
