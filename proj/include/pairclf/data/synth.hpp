#ifndef PAIRCLF_DATA_SYNTH_HPP
#define PAIRCLF_DATA_SYNTH_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairclf/core/error.hpp"
#include "pairclf/core/fptn.hpp"
#include "pairclf/core/prng.hpp"
#include "pairclf/data/manifest.hpp"

namespace pairclf::data {

/// Planted-signal generative model: every feature is N(0, noise^2) except that
/// ENT subjects receive a +signal mean shift inside the planted region.
struct SynthSpec {
    std::size_t n_subjects = 2000;
    double male_fraction = 0.81;
    double ent_fraction = 0.596;
    std::size_t height = 14, width = 14, channels = 8;
    std::vector<Region> regions = default_regions();
    std::string planted = "nose";
    double signal = 3.0;
    double noise = 1.0;
    std::size_t oracle_draws = 100000;

    static std::vector<Region> default_regions() {
        return {{"eyes", {1, 4, 2, 12}}, {"nose", {4, 9, 5, 10}}, {"mouth", {10, 13, 3, 11}}};
    }

    const Region& planted_region() const {
        for (const auto& r : regions)
            if (r.name == planted) return r;
        throw ConfigError("planted region '" + planted + "' is not among the synth regions");
    }

    void validate() const {
        if (n_subjects < 2) throw ConfigError("synth needs at least 2 subjects");
        if (!(male_fraction >= 0.0 && male_fraction <= 1.0)) throw ConfigError("male_fraction must lie in [0,1]");
        if (!(ent_fraction > 0.0 && ent_fraction < 1.0)) throw ConfigError("ent_fraction must lie in (0,1)");
        if (height == 0 || width == 0 || channels == 0) throw ConfigError("feature shape must be positive");
        if (!(signal >= 0.0)) throw ConfigError("signal strength must be >= 0");
        if (!(noise > 0.0)) throw ConfigError("noise scale must be > 0");
        if (oracle_draws == 0) throw ConfigError("oracle needs at least one draw");
        for (const auto& r : regions)
            if (!r.rect.fits(height, width)) throw ConfigError("region " + format_region(r) + " outside the grid");
        planted_region();
    }
};

struct OracleReport {
    double bayes_accuracy = 0.0;   // percent
    double standard_error = 0.0;   // percent
    std::size_t draws = 0;
    double closed_form = 0.0;      // percent, Phi(signal * sqrt(K) / (noise * sqrt 2))
};

struct SynthResult {
    Dataset dataset;
    OracleReport oracle;
};

/// Monte-Carlo estimate of the best achievable pair accuracy. The optimal
/// rule picks the side with the larger planted-region sum; only the planted
/// region is simulated because every other feature is label-independent.
inline OracleReport bayes_pair_accuracy(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::size_t K = spec.planted_region().rect.area() * spec.channels;
    Prng rng = Prng(seed).fork(0x0bac1e);
    double correct = 0.0;
    for (std::size_t d = 0; d < spec.oracle_draws; ++d) {
        double ent = 0.0, non = 0.0;
        for (std::size_t k = 0; k < K; ++k) ent += rng.normal(spec.signal, spec.noise);
        for (std::size_t k = 0; k < K; ++k) non += rng.normal(0.0, spec.noise);
        correct += ent > non ? 1.0 : (ent == non ? 0.5 : 0.0);
    }
    OracleReport rep;
    rep.draws = spec.oracle_draws;
    const double p = correct / static_cast<double>(spec.oracle_draws);
    rep.bayes_accuracy = 100.0 * p;
    rep.standard_error = 100.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(spec.oracle_draws));
    const double z = spec.signal * std::sqrt(static_cast<double>(K)) / (spec.noise * std::sqrt(2.0));
    rep.closed_form = 100.0 * 0.5 * std::erfc(-z / std::sqrt(2.0));
    return rep;
}

/// Generates subjects and features in memory. Gender and label counts are
/// rounded exactly from the spec's fractions; their assignment to subject ids
/// is shuffled. Subject i's features come from its own forked stream.
inline SynthResult synth_generate(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    Prng rng(seed);
    const std::size_t n = spec.n_subjects;
    const auto n_male = static_cast<std::size_t>(std::llround(spec.male_fraction * static_cast<double>(n)));
    std::vector<std::pair<Gender, Label>> slots;
    for (auto [g, count] : {std::pair{Gender::m, n_male}, std::pair{Gender::f, n - n_male}}) {
        const auto n_ent = static_cast<std::size_t>(std::llround(spec.ent_fraction * static_cast<double>(count)));
        for (std::size_t i = 0; i < count; ++i) slots.emplace_back(g, i < n_ent ? Label::ent : Label::non);
    }
    rng.shuffle(slots);

    const Rect planted = spec.planted_region().rect;
    SynthResult out;
    auto& ds = out.dataset;
    ds.subjects.reserve(n);
    ds.features.reserve(n);
    char id[32];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(id, sizeof id, "S%05zu", i + 1);
        SubjectRecord rec;
        rec.subject_id = id;
        rec.gender = slots[i].first;
        rec.label = slots[i].second;
        rec.feature_file = std::string("features/") + id + ".fptn";
        rec.regions = spec.regions;
        Tensor<float> f({spec.height, spec.width, spec.channels});
        Prng frng = rng.fork(i + 1);
        for (std::size_t y = 0; y < spec.height; ++y)
            for (std::size_t x = 0; x < spec.width; ++x) {
                const double shift = (rec.label == Label::ent && planted.contains(y, x)) ? spec.signal : 0.0;
                for (std::size_t c = 0; c < spec.channels; ++c)
                    f[(y * spec.width + x) * spec.channels + c] = static_cast<float>(frng.normal(shift, spec.noise));
            }
        ds.subjects.push_back(std::move(rec));
        ds.features.push_back(std::move(f));
    }
    validate(ds);
    out.oracle = bayes_pair_accuracy(spec, seed);
    return out;
}

inline nlohmann::json to_json(const OracleReport& r) {
    return {{"bayes_pair_accuracy", r.bayes_accuracy},
            {"standard_error", r.standard_error},
            {"draws", r.draws},
            {"closed_form_accuracy", r.closed_form}};
}

inline OracleReport oracle_from_json(const nlohmann::json& j) {
    OracleReport r;
    r.bayes_accuracy = j.at("bayes_pair_accuracy").get<double>();
    r.standard_error = j.at("standard_error").get<double>();
    r.draws = j.at("draws").get<std::size_t>();
    r.closed_form = j.at("closed_form_accuracy").get<double>();
    return r;
}

/// Writes manifest.csv, features/<id>.fptn and oracle.json under `dir`.
inline void write_synth(const SynthResult& res, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "features");
    const auto& ds = res.dataset;
    for (std::size_t i = 0; i < ds.subjects.size(); ++i) fptn::write(ds.features[i], dir / ds.subjects[i].feature_file);
    std::ofstream m(dir / "manifest.csv", std::ios::trunc);
    if (!m) throw FormatError("cannot write manifest in " + dir.string());
    write_manifest(ds.subjects, m);
    std::ofstream o(dir / "oracle.json", std::ios::trunc);
    o << to_json(res.oracle).dump(2) << '\n';
}

} // namespace pairclf::data

#endif // PAIRCLF_DATA_SYNTH_HPP
