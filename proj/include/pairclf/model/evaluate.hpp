#ifndef PAIRCLF_MODEL_EVALUATE_HPP
#define PAIRCLF_MODEL_EVALUATE_HPP

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "pairclf/core/error.hpp"
#include "pairclf/core/runtime.hpp"
#include "pairclf/model/features.hpp"
#include "pairclf/model/pair_model.hpp"

namespace pairclf::model {

/// "Positive" means the right-hand subject was named the ENT (output 1).
struct ConfusionCounts {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }
    std::uint64_t correct() const { return tp + tn; }

    void add(int target, int predicted) {
        if (target == 1) (predicted == 1 ? tp : fn)++;
        else (predicted == 0 ? tn : fp)++;
    }

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp, tn += o.tn, fp += o.fp, fn += o.fn;
        return *this;
    }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// (TP + TN) / (TP + FP + TN + FN) x 100.
inline double accuracy(const ConfusionCounts& c) {
    if (c.total() == 0) throw NumericalError("accuracy of an empty confusion table");
    return 100.0 * static_cast<double>(c.correct()) / static_cast<double>(c.total());
}

enum class Orientation {
    /// Each pair is scored in both orientations and the decision follows the
    /// sign of f(L,R) - f(R,L); exact ties name the lower-indexed subject.
    symmetrized,
    /// One forward pass per pair, class 1 iff the sigmoid output is >= 0.5.
    as_given,
};

struct PairPrediction {
    double prob_right = 0.5;  // probability that the right subject is the ENT
    int predicted = 0;
};

inline std::vector<PairPrediction> predict_pairs(const PairModel<float>& model, const FeatureBank& bank,
                                                 std::span<const IndexedPair> pairs,
                                                 Orientation orientation = Orientation::symmetrized,
                                                 std::size_t batch_size = 64) {
    bank.check_compatible(model.config());
    const FlushDenormals ftz;
    std::vector<PairPrediction> out(pairs.size());
    for (std::size_t b = 0; b < pairs.size(); b += batch_size) {
        const std::size_t e = std::min(pairs.size(), b + batch_size);
        const Tensor<float> fwd = model.predict(bank.batch(pairs, {}, b, e));
        if (orientation == Orientation::as_given) {
            for (std::size_t i = b; i < e; ++i) {
                const double p = fwd[i - b];
                out[i] = {p, p >= 0.5 ? 1 : 0};
            }
            continue;
        }
        const Tensor<float> rev = model.predict(bank.batch(pairs, {}, b, e, /*swap=*/true));
        for (std::size_t i = b; i < e; ++i) {
            const double d = static_cast<double>(fwd[i - b]) - static_cast<double>(rev[i - b]);
            int pred;
            if (d > 0.0) pred = 1;
            else if (d < 0.0) pred = 0;
            else pred = pairs[i].left < pairs[i].right ? 0 : 1;
            out[i] = {0.5 + 0.5 * d, pred};
        }
    }
    return out;
}

struct EvalResult {
    double accuracy = 0.0;
    ConfusionCounts counts;
};

inline EvalResult evaluate(const PairModel<float>& model, const FeatureBank& bank, std::span<const IndexedPair> pairs,
                           Orientation orientation = Orientation::symmetrized) {
    if (pairs.empty()) throw ProtocolError("cannot evaluate an empty pair set");
    const auto preds = predict_pairs(model, bank, pairs, orientation);
    EvalResult r;
    for (std::size_t i = 0; i < pairs.size(); ++i) r.counts.add(pairs[i].target, preds[i].predicted);
    r.accuracy = accuracy(r.counts);
    return r;
}

} // namespace pairclf::model

#endif // PAIRCLF_MODEL_EVALUATE_HPP
