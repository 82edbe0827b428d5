#ifndef PAIRCLF_TESTS_TABLE2_FIXTURE_HPP
#define PAIRCLF_TESTS_TABLE2_FIXTURE_HPP

// Synthetic decision log whose per-group respondent accuracies reproduce the
// published human-judge table: every respondent makes 10 decisions, a fixed
// number of them are flagged as recognized, and correct counts are tuned by
// local search until each group's mean and SD land on the published values.

#include <cmath>
#include <string>
#include <vector>

#include "pairclf/pairclf.hpp"

namespace testsupport {

struct Table2Group {
    pairclf::stats::Group group;
    std::size_t n;
    std::size_t recognized;
    double mean, sd;
    std::size_t decisions;  // retained, as published
};

inline const std::vector<Table2Group>& table2_groups() {
    using G = pairclf::stats::Group;
    static const std::vector<Table2Group> g{
        {G::entrepreneur, 384, 49, 50.27, 15.66, 3791}, {G::educator, 92, 9, 47.74, 17.35, 911},
        {G::researcher, 143, 11, 51.24, 15.42, 1419},   {G::vc_angel, 31, 0, 43.87, 14.30, 310},
        {G::trained, 133, 57, 48.12, 17.99, 1273},
    };
    return g;
}

inline constexpr double kModelMean = 79.51, kModelSd = 0.78;

/// The ten published trial accuracies of the model.
inline const std::vector<double>& published_trials() {
    static const std::vector<double> v{80.30, 78.76, 79.28, 77.89, 79.98, 79.53, 79.52, 80.39, 79.20, 80.24};
    return v;
}

namespace detail {

/// Correct counts c[i] in [0, ret[i]] whose accuracies 100*c/ret have the
/// requested mean and sample SD to within `tol`.
inline std::vector<int> fit_counts(const std::vector<int>& ret, double mean, double sd, double tol, std::uint64_t seed) {
    const std::size_t n = ret.size();
    pairclf::Prng rng(seed);
    std::vector<int> c(n);
    double s = 0, q = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = mean + sd * rng.normal();
        c[i] = std::clamp(static_cast<int>(std::lround(a / 100.0 * ret[i])), 0, ret[i]);
        const double x = 100.0 * c[i] / ret[i];
        s += x, q += x * x;
    }
    const double nn = static_cast<double>(n);
    auto cost = [&](double s_, double q_) {
        const double m = s_ / nn, v = (q_ - s_ * s_ / nn) / (nn - 1);
        return std::max(std::abs(m - mean), std::abs(std::sqrt(std::max(v, 0.0)) - sd));
    };
    double cur = cost(s, q);
    for (int it = 0; it < 2000000 && cur > tol; ++it) {
        // Either a single +-1 step or a transfer of one unit between two respondents.
        const std::size_t i = static_cast<std::size_t>(rng.below(n)), j = static_cast<std::size_t>(rng.below(n));
        const int di = rng.below(2) ? 1 : -1;
        const bool pair = rng.below(2) && i != j;
        if (c[i] + di < 0 || c[i] + di > ret[i]) continue;
        if (pair && (c[j] - di < 0 || c[j] - di > ret[j])) continue;
        auto acc = [&](std::size_t k, int v) { return 100.0 * v / ret[k]; };
        double s2 = s, q2 = q;
        const double xi0 = acc(i, c[i]), xi1 = acc(i, c[i] + di);
        s2 += xi1 - xi0, q2 += xi1 * xi1 - xi0 * xi0;
        if (pair) {
            const double xj0 = acc(j, c[j]), xj1 = acc(j, c[j] - di);
            s2 += xj1 - xj0, q2 += xj1 * xj1 - xj0 * xj0;
        }
        const double nc = cost(s2, q2);
        if (nc < cur) {
            c[i] += di;
            if (pair) c[j] -= di;
            s = s2, q = q2, cur = nc;
        }
    }
    if (cur > tol) throw pairclf::NumericalError("table fixture: local search did not converge");
    return c;
}

} // namespace detail

/// Decision rows for all 783 respondents. Recognized decisions are spread
/// one per respondent and carry correct=1 so that dropping them matters.
inline std::vector<pairclf::stats::DecisionRecord> table2_decisions(std::uint64_t seed = 1) {
    std::vector<pairclf::stats::DecisionRecord> rows;
    std::size_t next_id = 0;
    for (const auto& g : table2_groups()) {
        std::vector<int> ret(g.n, 10);
        for (std::size_t i = 0; i < g.recognized; ++i) ret[i] = 9;
        const auto c = detail::fit_counts(ret, g.mean, g.sd, 0.004, seed + next_id);
        for (std::size_t i = 0; i < g.n; ++i) {
            const std::string id = "r" + std::to_string(next_id++);
            int left = c[i];
            for (int k = 0; k < 10; ++k) {
                const bool recog = ret[i] == 9 && k == 9;
                const int ok = recog ? 1 : (left > 0 ? 1 : 0);
                if (!recog && left > 0) --left;
                rows.push_back({id, g.group, "pair" + std::to_string(k), ok, recog ? 1 : 0});
            }
        }
    }
    return rows;
}

inline std::string to_csv(const std::vector<pairclf::stats::DecisionRecord>& rows) {
    std::string s(pairclf::stats::kDecisionHeader);
    s += '\n';
    for (const auto& r : rows)
        s += r.respondent_id + ',' + pairclf::stats::to_string(r.group) + ',' + r.pair_id + ',' + std::to_string(r.correct) +
             ',' + std::to_string(r.recognized) + '\n';
    return s;
}

} // namespace testsupport

#endif // PAIRCLF_TESTS_TABLE2_FIXTURE_HPP
