#include "gradflow/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "gradflow/errors.hpp"
#include "gradflow/format.hpp"
#include "gradflow/model.hpp"

namespace gradflow {

double node_similarity(const DenseMatrix& x) { return frobenius_norm(project_b(x)); }

SimilarityProfile make_profile(ProfileKind kind, std::vector<double> values) {
    SimilarityProfile p;
    p.kind = kind;
    p.values = std::move(values);
    for (std::size_t l = 0; l < p.values.size(); ++l) {
        if (!std::isfinite(p.values[l])) p.nan_layers.push_back(l);
    }
    return p;
}

SimilarityProfile similarity_profile(const Tape& tape, ProfileKind kind) {
    const std::vector<DenseMatrix>* source = nullptr;
    if (kind == ProfileKind::Representation) {
        source = &tape.x;
    } else {
        if (!tape.has_backward) throw StateError("similarity_profile: tape has no backward pass");
        source = &tape.grad_x;
    }
    if (source->empty()) throw StateError("similarity_profile: tape is empty");
    std::vector<double> values;
    values.reserve(source->size());
    for (const DenseMatrix& m : *source) values.push_back(node_similarity(m));
    return make_profile(kind, std::move(values));
}

DecayFit fit_decay(const SimilarityProfile& profile) {
    const std::size_t depth = profile.depth();
    std::vector<double> xs, ys;
    DecayFit fit;
    for (std::size_t l = 0; l < profile.values.size(); ++l) {
        const double v = profile.values[l];
        if (!std::isfinite(v) || !(v > 0.0)) continue;
        if (xs.empty()) fit.first_layer = l;
        fit.last_layer = l;
        xs.push_back(static_cast<double>(depth - l));
        ys.push_back(std::log(v));
    }
    if (xs.size() < 3) {
        throw FitError("fit_decay: need at least 3 finite positive values, have " + std::to_string(xs.size()));
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    fit.points = xs.size();
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
        ss_res += r * r;
    }
    // A flat profile is fit exactly by a zero slope.
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    return fit;
}

void write_profile_csv(std::ostream& out, const SimilarityProfile& profile) {
    out << "layer,value,is_nan\n";
    for (std::size_t l = 0; l < profile.values.size(); ++l) {
        const double v = profile.values[l];
        out << l << ',' << format_double(v) << ',' << (std::isfinite(v) ? 0 : 1) << '\n';
    }
}

}  // namespace gradflow
