#ifndef PAIRCLF_ANALYSIS_COMMON_HPP
#define PAIRCLF_ANALYSIS_COMMON_HPP

#include <cmath>
#include <span>
#include <vector>

#include "pairclf/core/runtime.hpp"
#include "pairclf/model/features.hpp"
#include "pairclf/model/pair_model.hpp"

namespace pairclf::analysis {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// sigmoid(a) - sigmoid(b) without cancellation when both sit in the same
/// saturated tail.
inline double sigmoid_diff(double a, double b) {
    if (a == b) return 0.0;
    if (a > 0.0 && b > 0.0) return sigmoid(-b) - sigmoid(-a);
    return sigmoid(a) - sigmoid(b);
}

/// Eval-mode logits for a batch of explicit inputs (one tensor per stream per
/// side, each (B,H,W,C)).
inline std::vector<double> logits(const model::PairModel<float>& m, const model::PairInput<float>& in) {
    const FlushDenormals ftz;
    const Tensor<float> z = m.predict(in, /*logits=*/true);
    return {z.data().begin(), z.data().end()};
}

/// Logits for a list of index pairs, evaluated in fixed-size chunks.
inline std::vector<double> pair_logits(const model::PairModel<float>& m, const model::FeatureBank& bank,
                                       std::span<const model::IndexedPair> pairs, bool swap = false,
                                       std::size_t chunk = 64) {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (std::size_t b = 0; b < pairs.size(); b += chunk) {
        const std::size_t e = std::min(pairs.size(), b + chunk);
        const auto z = logits(m, bank.batch(pairs, {}, b, e, swap));
        out.insert(out.end(), z.begin(), z.end());
    }
    return out;
}

} // namespace pairclf::analysis

#endif // PAIRCLF_ANALYSIS_COMMON_HPP
