#ifndef PAIRCLF_ANALYSIS_PERTURB_HPP
#define PAIRCLF_ANALYSIS_PERTURB_HPP

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pairclf/analysis/common.hpp"
#include "pairclf/core/error.hpp"
#include "pairclf/core/prng.hpp"
#include "pairclf/data/manifest.hpp"

namespace pairclf::analysis {

struct Perturbation {
    enum class Kind { gaussian, region_shuffle } kind = Kind::gaussian;
    /// Noise standard deviation (gaussian only).
    double sigma = 0.0;
    /// Cells to shuffle (region_shuffle only); the whole grid when absent.
    std::optional<data::Rect> region;

    static Perturbation gaussian(double s) { return {Kind::gaussian, s, std::nullopt}; }
    static Perturbation shuffle(std::optional<data::Rect> r = std::nullopt) { return {Kind::region_shuffle, 0.0, r}; }
};

namespace detail {

/// Perturbs sample `i` of a (B,H,W,C) tensor in place.
inline void perturb_sample(Tensor<float>& x, std::size_t i, const Perturbation& p, Prng rng) {
    const std::size_t H = x.dim(1), W = x.dim(2), C = x.dim(3), n = H * W * C;
    float* v = x.ptr() + i * n;
    if (p.kind == Perturbation::Kind::gaussian) {
        // The same standard-normal draws are scaled by sigma, so runs at
        // different sigma are directly comparable.
        for (std::size_t k = 0; k < n; ++k) v[k] = static_cast<float>(v[k] + p.sigma * rng.normal());
        return;
    }
    const data::Rect r = p.region.value_or(data::Rect{0, H, 0, W});
    if (!r.fits(H, W)) throw ShapeError("perturbation region outside the feature grid");
    std::vector<std::size_t> cells;
    for (std::size_t a = r.r0; a < r.r1; ++a)
        for (std::size_t b = r.c0; b < r.c1; ++b) cells.push_back(a * W + b);
    std::vector<std::size_t> perm = cells;
    rng.shuffle(perm);
    std::vector<float> orig(v, v + n);
    for (std::size_t k = 0; k < cells.size(); ++k)
        std::copy(orig.begin() + static_cast<std::ptrdiff_t>(perm[k] * C), orig.begin() + static_cast<std::ptrdiff_t>(perm[k] * C + C),
                  v + cells[k] * C);
}

} // namespace detail

/// Mean |p_perturbed - p_original| x 100, where the ENT side of every pair is
/// perturbed with draws from Prng(seed).fork(pair index).
inline double perturb_confidence(const model::PairModel<float>& m, const model::FeatureBank& bank,
                                 std::span<const model::IndexedPair> pairs, const Perturbation& p, std::uint64_t seed) {
    if (p.kind == Perturbation::Kind::gaussian && !(p.sigma >= 0.0)) throw ConfigError("perturbation sigma must be >= 0");
    if (pairs.empty()) throw ProtocolError("perturbation needs at least one pair");
    bank.check_compatible(m.config());
    constexpr std::size_t chunk = 64;
    std::vector<double> changes;
    changes.reserve(pairs.size());
    const Prng base(seed);
    for (std::size_t b = 0; b < pairs.size(); b += chunk) {
        const std::size_t e = std::min(pairs.size(), b + chunk);
        auto in = bank.batch(pairs, {}, b, e);
        const auto z0 = logits(m, in);
        for (std::size_t i = b; i < e; ++i) {
            auto& side = pairs[i].target == 1 ? in.right : in.left;
            for (std::size_t s = 0; s < side.size(); ++s) detail::perturb_sample(side[s], i - b, p, base.fork(i * 16 + s));
        }
        const auto z1 = logits(m, in);
        for (std::size_t i = 0; i < z0.size(); ++i) changes.push_back(std::abs(sigmoid_diff(z1[i], z0[i])));
    }
    return 100.0 * pairwise_sum(changes) / static_cast<double>(changes.size());
}

} // namespace pairclf::analysis

#endif // PAIRCLF_ANALYSIS_PERTURB_HPP
