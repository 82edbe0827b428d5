#ifndef PAIRCLF_STATS_SUMMARY_HPP
#define PAIRCLF_STATS_SUMMARY_HPP

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "pairclf/core/error.hpp"

namespace pairclf::stats {

struct MeanSd {
    double mean = 0.0;
    std::optional<double> sd;  // sample SD (n-1); absent for n == 1
    std::size_t n = 0;
};

inline MeanSd mean_sd(std::span<const double> xs) {
    if (xs.empty()) throw NumericalError("mean of an empty sample");
    MeanSd out;
    out.n = xs.size();
    double s = 0.0;
    for (double x : xs) s += x;
    out.mean = s / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return out;
}

inline MeanSd mean_sd(const std::vector<double>& xs) { return mean_sd(std::span<const double>(xs)); }

} // namespace pairclf::stats

#endif // PAIRCLF_STATS_SUMMARY_HPP
