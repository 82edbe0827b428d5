#ifndef PAIRCLF_NN_LOSS_HPP
#define PAIRCLF_NN_LOSS_HPP

#include <algorithm>
#include <cmath>
#include <span>

#include "pairclf/core/error.hpp"
#include "pairclf/core/tensor.hpp"

namespace pairclf::nn {

inline constexpr double kProbClamp = 1e-7;

struct BceValue {
    double loss;
    double dloss_dp;
};

/// Binary cross-entropy on a probability clamped to [1e-7, 1-1e-7].
/// The derivative is taken at the clamped point, so saturated outputs still
/// receive a gradient.
inline BceValue bce_loss(double p, int y) {
    if (y != 0 && y != 1) throw ConfigError("bce target must be 0 or 1, got " + std::to_string(y));
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    if (y == 1) return {-std::log(pc), -1.0 / pc};
    return {-std::log(1.0 - pc), 1.0 / (1.0 - pc)};
}

/// Mean BCE over a batch of (B,1) probabilities; fills the gradient w.r.t. the
/// probabilities.
template <class T>
double bce_batch(const Tensor<T>& probs, std::span<const int> targets, Tensor<T>& grad) {
    if (probs.size() != targets.size()) throw ShapeError("bce: probability/target count mismatch");
    grad = Tensor<T>(probs.shape());
    const double inv_b = 1.0 / static_cast<double>(targets.size());
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto v = bce_loss(static_cast<double>(probs[i]), targets[i]);
        total += v.loss;
        grad[i] = static_cast<T>(v.dloss_dp * inv_b);
    }
    return total * inv_b;
}

} // namespace pairclf::nn

#endif // PAIRCLF_NN_LOSS_HPP
