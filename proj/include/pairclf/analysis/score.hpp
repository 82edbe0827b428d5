#ifndef PAIRCLF_ANALYSIS_SCORE_HPP
#define PAIRCLF_ANALYSIS_SCORE_HPP

#include <algorithm>
#include <vector>

#include "pairclf/analysis/common.hpp"
#include "pairclf/core/error.hpp"
#include "pairclf/data/manifest.hpp"

namespace pairclf::analysis {

/// Probability that `subject` is the ENT, averaged over a panel of reference
/// subjects and over both orientations of every comparison.
///
/// Per panel member the two orientations give sigmoid(-z_left) and
/// sigmoid(z_right); their mean is written as 0.5 + (sigmoid(z_right) -
/// sigmoid(z_left)) / 2 so that a model blind to its inputs scores exactly 0.5.
/// The panel is put in canonical order first, which makes the result
/// independent of the order the caller lists it in.
inline double score_single(const model::PairModel<float>& m, const model::FeatureBank& bank, const data::Dataset& ds,
                           std::size_t subject, std::vector<std::size_t> panel, bool mixed_panel = false) {
    if (panel.empty()) throw ProtocolError("score_single needs a non-empty panel");
    if (!mixed_panel)
        for (auto j : panel)
            if (ds.subjects.at(j).gender != ds.subjects.at(subject).gender)
                throw ProtocolError("panel member " + ds.subjects[j].subject_id + " differs in gender from " +
                                    ds.subjects[subject].subject_id + " (allow with a mixed panel)");
    std::sort(panel.begin(), panel.end());
    std::vector<model::IndexedPair> as_left, as_right;
    for (auto j : panel) {
        as_left.push_back({subject, j, 0});
        as_right.push_back({j, subject, 1});
    }
    const auto zl = pair_logits(m, bank, as_left);
    const auto zr = pair_logits(m, bank, as_right);
    std::vector<double> d(panel.size());
    for (std::size_t k = 0; k < panel.size(); ++k) d[k] = sigmoid_diff(zr[k], zl[k]);
    std::sort(d.begin(), d.end());
    return 0.5 + 0.5 * pairwise_sum(d) / static_cast<double>(d.size());
}

} // namespace pairclf::analysis

#endif // PAIRCLF_ANALYSIS_SCORE_HPP
