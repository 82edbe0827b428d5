#ifndef PAIRCLF_MODEL_TRAIN_HPP
#define PAIRCLF_MODEL_TRAIN_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "pairclf/core/error.hpp"
#include "pairclf/core/parallel.hpp"
#include "pairclf/core/runtime.hpp"
#include "pairclf/model/bundle.hpp"
#include "pairclf/model/evaluate.hpp"
#include "pairclf/model/features.hpp"
#include "pairclf/nn/loss.hpp"
#include "pairclf/stats/summary.hpp"

namespace pairclf::model {

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double val_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainOptions {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrialReport {
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    std::vector<EpochRecord> curve;
    /// Epoch (1-based) with the highest validation accuracy, latest on ties.
    std::size_t best_epoch = 0;
    double final_test_accuracy = std::numeric_limits<double>::quiet_NaN();
    double converged_test_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainOutcome {
    TrialReport report;
    /// Snapshot at the best validation epoch (equals the final model without validation pairs).
    PairModel<float> best;
};

struct LossAcc {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Mean BCE and single-orientation accuracy in eval mode.
inline LossAcc eval_loss(const PairModel<float>& model, const FeatureBank& bank, std::span<const IndexedPair> pairs,
                         std::size_t batch_size = 128) {
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < pairs.size(); b += batch_size) {
        const std::size_t e = std::min(pairs.size(), b + batch_size);
        const Tensor<float> p = model.predict(bank.batch(pairs, {}, b, e));
        for (std::size_t i = b; i < e; ++i) {
            loss += nn::bce_loss(p[i - b], pairs[i].target).loss;
            correct += ((p[i - b] >= 0.5f ? 1 : 0) == pairs[i].target) ? 1 : 0;
        }
    }
    const double n = static_cast<double>(pairs.size());
    return {loss / n, 100.0 * static_cast<double>(correct) / n};
}

/// Mini-batch BCE + Adam training. Pair order is reshuffled every epoch from
/// the bundle seed; dropout masks come from a separate stream of the same seed.
inline TrainOutcome train(ModelBundle& bundle, const FeatureBank& bank, std::span<const IndexedPair> train_pairs,
                          std::span<const IndexedPair> val_pairs, const TrainOptions& opts) {
    bank.check_compatible(bundle.model.config());
    const FlushDenormals ftz;
    if (train_pairs.empty()) throw ProtocolError("training needs at least one pair");
    if (opts.batch_size == 0) throw ConfigError("batch size must be positive");
    auto& model = bundle.model;
    Prng order_rng = Prng(bundle.seed).fork(1);
    Prng dropout_rng = Prng(bundle.seed).fork(2);
    const auto params = model.params();

    TrainOutcome out{TrialReport{bundle.seed, opts.epochs, {}, 0}, model};
    double best_val = -1.0;
    std::vector<std::size_t> order(train_pairs.size());
    PairCache<float> cache;
    Tensor<float> grad;
    std::vector<int> targets;
    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t b = 0; b < order.size(); b += opts.batch_size) {
            const std::size_t e = std::min(order.size(), b + opts.batch_size);
            const auto in = bank.batch(train_pairs, order, b, e);
            targets.clear();
            for (std::size_t i = b; i < e; ++i) targets.push_back(train_pairs[order[i]].target);
            model.zero_grad();
            const Tensor<float> p = model.forward(in, nn::Mode::train, dropout_rng, &cache);
            const double loss = nn::bce_batch(p, targets, grad);
            if (!std::isfinite(loss)) throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch));
            model.backward(cache, grad);
            bundle.optimizer.step(params);
            loss_sum += loss * static_cast<double>(e - b);
            for (std::size_t i = 0; i < targets.size(); ++i) correct += ((p[i] >= 0.5f ? 1 : 0) == targets[i]) ? 1 : 0;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.train_acc = 100.0 * static_cast<double>(correct) / static_cast<double>(order.size());
        if (!val_pairs.empty()) {
            const auto v = eval_loss(model, bank, val_pairs);
            rec.val_loss = v.loss;
            rec.val_acc = v.accuracy;
            if (v.accuracy >= best_val) {
                best_val = v.accuracy;
                out.report.best_epoch = epoch;
                out.best = model;
            }
        }
        out.report.curve.push_back(rec);
        if (opts.on_epoch) opts.on_epoch(rec);
    }
    if (val_pairs.empty() || opts.epochs == 0) {
        out.report.best_epoch = opts.epochs;
        out.best = model;
    }
    return out;
}

inline void write_curve_csv(const TrialReport& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    out.precision(10);
    for (const auto& e : r.curve) {
        out << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',';
        if (std::isnan(e.val_loss)) out << ",\n";
        else out << e.val_loss << ',' << e.val_acc << '\n';
    }
}

struct TrialSetup {
    ModelConfig model;
    nn::AdamConfig adam;
    TrainOptions train;
    Orientation orientation = Orientation::symmetrized;
};

struct TrialOutcome {
    TrialReport report;
    ConfusionCounts final_counts;
    ConfusionCounts converged_counts;
};

struct TrialsResult {
    std::vector<TrialOutcome> trials;
    stats::MeanSd final_summary;
    stats::MeanSd converged_summary;

    std::vector<double> final_accuracies() const {
        std::vector<double> v;
        for (const auto& t : trials) v.push_back(t.report.final_test_accuracy);
        return v;
    }
};

/// One train/evaluate run from a fresh initialization with `seed`.
inline TrialOutcome run_trial(const TrialSetup& setup, const FeatureBank& bank, std::span<const IndexedPair> train_pairs,
                              std::span<const IndexedPair> val_pairs, std::span<const IndexedPair> test_pairs,
                              std::uint64_t seed) {
    auto bundle = build_model(setup.model, seed, setup.adam);
    auto trained = train(bundle, bank, train_pairs, val_pairs, setup.train);
    TrialOutcome out{std::move(trained.report), {}, {}};
    const auto fin = evaluate(bundle.model, bank, test_pairs, setup.orientation);
    const auto conv = evaluate(trained.best, bank, test_pairs, setup.orientation);
    out.report.final_test_accuracy = fin.accuracy;
    out.report.converged_test_accuracy = conv.accuracy;
    out.final_counts = fin.counts;
    out.converged_counts = conv.counts;
    return out;
}

/// Trial i trains with seed base_seed + i. Up to `jobs` trials run at once;
/// results are stored by trial index, so the output does not depend on `jobs`.
inline TrialsResult repeat_trials(const TrialSetup& setup, const FeatureBank& bank,
                                  std::span<const IndexedPair> train_pairs, std::span<const IndexedPair> val_pairs,
                                  std::span<const IndexedPair> test_pairs, std::size_t k, std::uint64_t base_seed,
                                  std::size_t jobs = 1) {
    if (k == 0) throw ConfigError("repeat_trials needs k >= 1");
    TrialsResult res;
    res.trials.resize(k);
    parallel_for(k, jobs, [&](std::size_t i) {
        res.trials[i] = run_trial(setup, bank, train_pairs, val_pairs, test_pairs, base_seed + i);
    });
    std::vector<double> fin, conv;
    for (const auto& t : res.trials) {
        fin.push_back(t.report.final_test_accuracy);
        conv.push_back(t.report.converged_test_accuracy);
    }
    res.final_summary = stats::mean_sd(fin);
    res.converged_summary = stats::mean_sd(conv);
    return res;
}

} // namespace pairclf::model

#endif // PAIRCLF_MODEL_TRAIN_HPP
