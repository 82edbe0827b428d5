#ifndef PAIRCLF_NN_GRAD_CHECK_HPP
#define PAIRCLF_NN_GRAD_CHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pairclf/core/prng.hpp"
#include "pairclf/core/tensor.hpp"
#include "pairclf/model/pair_model.hpp"
#include "pairclf/nn/sequential.hpp"

namespace pairclf::nn {

struct GradCheckOptions {
    double tolerance = 1e-4;
    /// Central-difference step, relative to max(1, |value|).
    double step = 1e-5;
    /// Coordinates checked per block (all of them when the block is smaller).
    std::size_t coords_per_block = 24;
    /// Relative errors use max(|analytic|, |numeric|, floor) as denominator.
    double floor = 1e-6;
    std::uint64_t seed = 0;
};

struct GradBlockReport {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    /// Coordinates whose perturbation crossed a kink (relu sign, pool argmax).
    std::size_t skipped = 0;
};

struct GradCheckReport {
    double tolerance = 0.0;
    std::vector<GradBlockReport> blocks;

    double max_rel_error() const {
        double m = 0.0;
        for (const auto& b : blocks) m = std::max(m, b.max_rel_error);
        return m;
    }
    bool passed() const {
        for (const auto& b : blocks)
            if (!(b.max_rel_error <= tolerance) || b.checked == 0) return false;
        return !blocks.empty();
    }
};

/// A differentiable scalar function of several value blocks.
struct GradProblem {
    struct Block {
        std::string name;
        Tensor<double>* value = nullptr;
        /// Filled by `analytic`.
        const Tensor<double>* grad = nullptr;
    };
    std::vector<Block> blocks;
    /// Loss and activation-pattern hash at the current values.
    std::function<std::pair<double, std::uint64_t>()> loss;
    /// Recomputes every block's analytic gradient at the current values.
    std::function<void()> analytic;
};

/// Compares analytic gradients with central differences. Never throws on a
/// mismatch; the report says whether the tolerance held.
inline GradCheckReport check_gradients(GradProblem& prob, const GradCheckOptions& opt) {
    GradCheckReport rep;
    rep.tolerance = opt.tolerance;
    prob.analytic();
    const std::uint64_t base_pattern = prob.loss().second;
    Prng rng(opt.seed);
    for (auto& blk : prob.blocks) {
        GradBlockReport br{blk.name};
        const std::size_t n = blk.value->size();
        auto order = rng.permutation(n);
        for (std::size_t idx : order) {
            if (br.checked >= opt.coords_per_block) break;
            double& v = (*blk.value)[idx];
            const double orig = v;
            const double h = opt.step * std::max(1.0, std::abs(orig));
            v = orig + h;
            const auto [lp, pp] = prob.loss();
            v = orig - h;
            const auto [lm, pm] = prob.loss();
            v = orig;
            if (pp != base_pattern || pm != base_pattern) {
                ++br.skipped;
                continue;
            }
            const double num = (lp - lm) / (2.0 * h);
            const double ana = (*blk.grad)[idx];
            const double err = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), opt.floor});
            br.max_rel_error = std::max(br.max_rel_error, std::isfinite(err) ? err : 1e300);
            ++br.checked;
        }
        rep.blocks.push_back(std::move(br));
    }
    return rep;
}

namespace detail {

inline Tensor<double> random_weights(const Shape& s, std::uint64_t seed) {
    Tensor<double> w(s);
    Prng r(seed);
    for (auto& v : w.data()) v = r.normal();
    return w;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace detail

/// Gradient check of a layer stack on loss = sum(w * net(x)) with fixed random
/// w. Dropout masks are held fixed by replaying the same generator state.
inline GradCheckReport grad_check(Sequential<double>& net, Tensor<double> input, const GradCheckOptions& opt = {},
                                  Mode mode = Mode::train) {
    const Prng dropout_rng(opt.seed ^ 0x5eedULL);
    const Tensor<double> w = detail::random_weights(net.output_shape(input.shape()), opt.seed + 1);
    Tensor<double> dx;
    GradProblem prob;
    prob.loss = [&] {
        Prng r = dropout_rng;
        SeqCache<double> cache;
        const Tensor<double> y = net.forward(input, mode, r, &cache);
        return std::pair{detail::dot(y, w), net.pattern(cache)};
    };
    prob.analytic = [&] {
        for (auto* p : net.params()) p->zero_grad();
        Prng r = dropout_rng;
        SeqCache<double> cache;
        net.forward(input, mode, r, &cache);
        dx = net.backward(cache, w, true);
        for (auto* p : net.params()) p->grad_acc();
    };
    prob.blocks.push_back({"input", &input, &dx});
    std::size_t k = 0;
    for (auto* p : net.params()) prob.blocks.push_back({std::to_string(k++) + "/" + p->name, &p->value, &p->grad});
    return check_gradients(prob, opt);
}

/// Gradient check of a whole pair model, including both sides' input gradients.
inline GradCheckReport grad_check(model::PairModel<double>& m, model::PairInput<double> in,
                                  const GradCheckOptions& opt = {}) {
    const Prng dropout_rng(opt.seed ^ 0x5eedULL);
    const Tensor<double> w = detail::random_weights({in.batch(), 1}, opt.seed + 1);
    model::PairInput<double> din;
    GradProblem prob;
    prob.loss = [&] {
        Prng r = dropout_rng;
        model::PairCache<double> cache;
        const Tensor<double> y = m.forward(in, Mode::train, r, &cache);
        return std::pair{detail::dot(y, w), m.pattern(cache)};
    };
    prob.analytic = [&] {
        m.zero_grad();
        Prng r = dropout_rng;
        model::PairCache<double> cache;
        m.forward(in, Mode::train, r, &cache);
        auto g = m.backward(cache, w, true);
        if (din.left.empty()) {
            din = std::move(g);
        } else {
            // Element-wise move keeps the tensors' addresses, which the blocks hold.
            for (std::size_t s = 0; s < g.left.size(); ++s) {
                din.left[s] = std::move(g.left[s]);
                din.right[s] = std::move(g.right[s]);
            }
        }
        for (auto* p : m.params()) p->grad_acc();
    };
    prob.analytic();  // sizes din so the block pointers below are stable
    for (std::size_t s = 0; s < in.left.size(); ++s) {
        prob.blocks.push_back({"left" + std::to_string(s), &in.left[s], &din.left[s]});
        prob.blocks.push_back({"right" + std::to_string(s), &in.right[s], &din.right[s]});
    }
    for (auto& [name, p] : m.named_params()) prob.blocks.push_back({name, &p->value, &p->grad});
    return check_gradients(prob, opt);
}

} // namespace pairclf::nn

#endif // PAIRCLF_NN_GRAD_CHECK_HPP
