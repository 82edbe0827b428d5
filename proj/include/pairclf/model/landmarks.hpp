#ifndef PAIRCLF_MODEL_LANDMARKS_HPP
#define PAIRCLF_MODEL_LANDMARKS_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pairclf/core/parallel.hpp"
#include "pairclf/data/pairing.hpp"
#include "pairclf/model/train.hpp"
#include "pairclf/report/svg.hpp"

namespace pairclf::model {

struct LandmarkStudyConfig {
    std::vector<std::string> landmarks{"eyes", "nose", "mouth"};
    std::size_t repeats = 3;
    bool combined = true;
    data::SplitConfig split;
    /// Model fields other than the variant; the variant is set per run.
    ModelConfig model = ModelConfig::defaults(Variant::landmark_single);
    nn::AdamConfig adam;
    TrainOptions train;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

struct LandmarkRow {
    std::string name;  // a landmark name or "combined"
    std::vector<double> accuracies;  // one per repeat
    double mean = 0.0;
};

struct LandmarkStudy {
    std::vector<LandmarkRow> rows;

    const LandmarkRow& row(const std::string& name) const {
        for (const auto& r : rows)
            if (r.name == name) return r;
        throw ProtocolError("no landmark row '" + name + "'");
    }
};

/// Landmark-masked classifiers. Repeat r resplits the pairs with seed+r and
/// trains every model from seed+r; each single-landmark model sees only its
/// own region, and the combined model gets one masked stream per landmark.
inline LandmarkStudy run_landmark_study(const data::Dataset& ds, const std::vector<data::PairSample>& pairs,
                                        const LandmarkStudyConfig& cfg) {
    if (cfg.landmarks.empty()) throw ConfigError("landmark study needs at least one landmark");
    if (cfg.repeats == 0) throw ConfigError("landmark study needs at least one repeat");
    std::vector<FeatureBank> banks;
    for (const auto& name : cfg.landmarks) banks.push_back(FeatureBank::masked(ds, {{name}}));
    if (cfg.combined) {
        std::vector<std::vector<std::string>> streams;
        for (const auto& name : cfg.landmarks) streams.push_back({name});
        banks.push_back(FeatureBank::masked(ds, streams));
    }
    struct Split {
        std::vector<IndexedPair> train, val, test;
    };
    std::vector<Split> splits;
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        data::SplitConfig sc = cfg.split;
        sc.seed = cfg.seed + r;
        const auto sp = data::split_pairs(pairs, sc);
        splits.push_back({resolve(ds, sp.train), resolve(ds, sp.validation), resolve(ds, sp.test)});
    }
    const std::size_t M = banks.size();
    std::vector<double> acc(M * cfg.repeats);
    parallel_for(M * cfg.repeats, cfg.jobs, [&](std::size_t task) {
        const std::size_t mi = task % M, r = task / M;
        ModelConfig mc = cfg.model;
        mc.variant = (cfg.combined && mi + 1 == M) ? Variant::landmark_combined : Variant::landmark_single;
        if (mc.variant == Variant::landmark_combined && cfg.landmarks.size() != 3)
            throw ConfigError("the combined landmark model takes exactly three landmarks");
        auto bundle = build_model(mc, cfg.seed + r, cfg.adam);
        const auto& s = splits[r];
        train(bundle, banks[mi], s.train, s.val, cfg.train);
        acc[task] = evaluate(bundle.model, banks[mi], s.test).accuracy;
    });
    LandmarkStudy out;
    for (std::size_t mi = 0; mi < M; ++mi) {
        LandmarkRow row;
        row.name = mi < cfg.landmarks.size() ? cfg.landmarks[mi] : "combined";
        for (std::size_t r = 0; r < cfg.repeats; ++r) row.accuracies.push_back(acc[r * M + mi]);
        row.mean = stats::mean_sd(row.accuracies).mean;
        out.rows.push_back(std::move(row));
    }
    return out;
}

inline void write_landmark_csv(const LandmarkStudy& st, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "landmark,repeat,accuracy\n";
    out.precision(10);
    for (const auto& r : st.rows) {
        for (std::size_t i = 0; i < r.accuracies.size(); ++i) out << r.name << ',' << i + 1 << ',' << r.accuracies[i] << '\n';
        out << r.name << ",mean," << r.mean << '\n';
    }
}

inline std::string landmark_svg(const LandmarkStudy& st) {
    std::vector<report::Bar> bars;
    for (const auto& r : st.rows) bars.push_back({r.name, r.mean, std::nullopt});
    return report::bar_chart_svg("Landmark classifier accuracy (%)", bars, 50.0);
}

} // namespace pairclf::model

#endif // PAIRCLF_MODEL_LANDMARKS_HPP
