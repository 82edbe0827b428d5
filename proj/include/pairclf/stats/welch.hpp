#ifndef PAIRCLF_STATS_WELCH_HPP
#define PAIRCLF_STATS_WELCH_HPP

#include <cmath>
#include <span>

#include <boost/math/distributions/students_t.hpp>

#include "pairclf/core/error.hpp"
#include "pairclf/stats/summary.hpp"

namespace pairclf::stats {

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;  // two-sided
};

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
inline double t_two_sided_p(double t, double df) {
    if (t == 0.0) return 1.0;
    const boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

/// Welch's unequal-variance t-test of mean(a) - mean(b), with
/// Welch-Satterthwaite degrees of freedom.
inline WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw ConfigError("welch_t needs at least two values per sample");
    const MeanSd sa = mean_sd(a), sb = mean_sd(b);
    const double va = *sa.sd * *sa.sd / static_cast<double>(a.size());
    const double vb = *sb.sd * *sb.sd / static_cast<double>(b.size());
    const double se2 = va + vb;
    if (!(se2 > 0.0)) throw NumericalError("welch_t: both samples have zero variance");
    WelchResult r;
    r.t = (sa.mean - sb.mean) / std::sqrt(se2);
    r.df = se2 * se2 / (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
    r.p = t_two_sided_p(r.t, r.df);
    return r;
}

inline WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    return welch_t(std::span<const double>(a), std::span<const double>(b));
}

} // namespace pairclf::stats

#endif // PAIRCLF_STATS_WELCH_HPP
