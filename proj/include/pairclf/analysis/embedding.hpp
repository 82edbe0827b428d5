#ifndef PAIRCLF_ANALYSIS_EMBEDDING_HPP
#define PAIRCLF_ANALYSIS_EMBEDDING_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pairclf/analysis/pca.hpp"
#include "pairclf/core/prng.hpp"
#include "pairclf/core/runtime.hpp"
#include "pairclf/data/manifest.hpp"
#include "pairclf/model/features.hpp"
#include "pairclf/model/pair_model.hpp"

namespace pairclf::analysis {

/// Lloyd 2-means with seeded restarts; returns the assignment with the lowest
/// within-cluster sum of squares (earliest restart on ties).
inline std::vector<int> two_means(const std::vector<std::array<double, 2>>& pts, std::uint64_t seed,
                                  int restarts = 10) {
    const std::size_t n = pts.size();
    if (n < 2) throw ShapeError("two_means needs at least 2 points");
    auto d2 = [](const std::array<double, 2>& a, const std::array<double, 2>& b) {
        return (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
    };
    Prng rng(seed);
    std::vector<int> best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        const std::size_t i0 = static_cast<std::size_t>(rng.below(n));
        std::size_t i1 = static_cast<std::size_t>(rng.below(n - 1));
        if (i1 >= i0) ++i1;
        std::array<std::array<double, 2>, 2> c{pts[i0], pts[i1]};
        std::vector<int> asg(n, -1);
        for (int it = 0; it < 300; ++it) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                const int k = d2(pts[i], c[1]) < d2(pts[i], c[0]) ? 1 : 0;
                if (k != asg[i]) asg[i] = k, changed = true;
            }
            if (!changed) break;
            for (int k = 0; k < 2; ++k) {
                double sx = 0, sy = 0;
                std::size_t m = 0;
                for (std::size_t i = 0; i < n; ++i)
                    if (asg[i] == k) sx += pts[i][0], sy += pts[i][1], ++m;
                if (m) c[static_cast<std::size_t>(k)] = {sx / static_cast<double>(m), sy / static_cast<double>(m)};
            }
        }
        double cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) cost += d2(pts[i], c[static_cast<std::size_t>(asg[i])]);
        if (cost < best_cost) best_cost = cost, best = asg;
    }
    return best;
}

/// Sum over clusters of the majority-class count, divided by n.
inline double purity(const std::vector<int>& clusters, const std::vector<std::string>& classes) {
    if (clusters.size() != classes.size() || clusters.empty()) throw ShapeError("purity: size mismatch");
    std::map<int, std::map<std::string, std::size_t>> counts;
    for (std::size_t i = 0; i < clusters.size(); ++i) ++counts[clusters[i]][classes[i]];
    std::size_t hit = 0;
    for (const auto& [k, m] : counts) {
        std::size_t best = 0;
        for (const auto& [c, v] : m) best = std::max(best, v);
        hit += best;
    }
    return static_cast<double>(hit) / static_cast<double>(clusters.size());
}

struct EmbeddingStudy {
    std::vector<std::size_t> subjects;  // dataset indices
    Pca2d pca;
    std::vector<int> clusters;
    double label_purity = 0.0;
    double gender_purity = 0.0;
};

/// Random sample without replacement of `n_male` male and `n_female` female
/// subjects (fewer when a gender has fewer members).
inline std::vector<std::size_t> sample_subjects(const data::Dataset& ds, std::size_t n_male, std::size_t n_female,
                                                std::uint64_t seed) {
    std::vector<std::size_t> male, female;
    for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
        if (ds.subjects[i].gender == data::Gender::m) male.push_back(i);
        else if (ds.subjects[i].gender == data::Gender::f) female.push_back(i);
    }
    Prng rng(seed);
    rng.shuffle(male);
    rng.shuffle(female);
    male.resize(std::min(n_male, male.size()));
    female.resize(std::min(n_female, female.size()));
    std::vector<std::size_t> out = male;
    out.insert(out.end(), female.begin(), female.end());
    std::sort(out.begin(), out.end());
    return out;
}

/// Branch embeddings (trunk outputs, flattened; streams concatenated) of the
/// given subjects, projected with PCA and clustered with 2-means.
inline EmbeddingStudy embedding_study(const model::PairModel<float>& m, const model::FeatureBank& bank,
                                      const data::Dataset& ds, const std::vector<std::size_t>& subjects,
                                      std::uint64_t seed) {
    bank.check_compatible(m.config());
    std::map<data::Label, std::size_t> labels;
    std::map<data::Gender, std::size_t> genders;
    for (auto i : subjects) {
        ++labels[ds.subjects.at(i).label];
        ++genders[ds.subjects.at(i).gender];
    }
    if (labels.size() < 2) throw ProtocolError("embedding study needs both ENT and NON subjects");
    if (genders.size() < 2) throw ProtocolError("embedding study needs more than one gender");

    const FlushDenormals ftz;
    const std::size_t F = m.embedding_size();
    std::vector<std::vector<double>> vecs(subjects.size());
    constexpr std::size_t chunk = 64;
    Shape bs{0};
    bs.insert(bs.end(), bank.shape().begin(), bank.shape().end());
    const std::size_t n = shape_size(bank.shape());
    for (std::size_t b = 0; b < subjects.size(); b += chunk) {
        const std::size_t e = std::min(subjects.size(), b + chunk);
        bs[0] = e - b;
        for (std::size_t s = 0; s < bank.streams(); ++s) {
            Tensor<float> x(bs);
            for (std::size_t i = b; i < e; ++i) std::copy(bank.at(s, subjects[i]).ptr(), bank.at(s, subjects[i]).ptr() + n, x.ptr() + (i - b) * n);
            const Tensor<float> z = m.embed(x, s);
            for (std::size_t i = b; i < e; ++i) vecs[i].insert(vecs[i].end(), z.ptr() + (i - b) * F, z.ptr() + (i - b + 1) * F);
        }
    }
    EmbeddingStudy out;
    out.subjects = subjects;
    out.pca = pca_2d(vecs);
    out.clusters = two_means(out.pca.coords, seed);
    std::vector<std::string> lab, gen;
    for (auto i : subjects) {
        lab.emplace_back(data::to_string(ds.subjects[i].label));
        gen.emplace_back(data::to_string(ds.subjects[i].gender));
    }
    out.label_purity = purity(out.clusters, lab);
    out.gender_purity = purity(out.clusters, gen);
    return out;
}

inline void write_embedding_csv(const EmbeddingStudy& st, const data::Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "subject_id,label,gender,pc1,pc2,cluster\n";
    out.precision(12);
    for (std::size_t i = 0; i < st.subjects.size(); ++i) {
        const auto& s = ds.subjects[st.subjects[i]];
        out << s.subject_id << ',' << data::to_string(s.label) << ',' << data::to_string(s.gender) << ','
            << st.pca.coords[i][0] << ',' << st.pca.coords[i][1] << ',' << st.clusters[i] << '\n';
    }
}

/// Scatter plot: colour encodes the label, marker shape the gender.
inline std::string embedding_svg(const EmbeddingStudy& st, const data::Dataset& ds) {
    const double W = 480, H = 480, pad = 40;
    double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
    for (const auto& p : st.pca.coords) {
        x0 = std::min(x0, p[0]), x1 = std::max(x1, p[0]);
        y0 = std::min(y0, p[1]), y1 = std::max(y1, p[1]);
    }
    const double sx = (W - 2 * pad) / std::max(x1 - x0, 1e-12), sy = (H - 2 * pad) / std::max(y1 - y0, 1e-12);
    std::ostringstream s;
    s.precision(6);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < st.subjects.size(); ++i) {
        const auto& sub = ds.subjects[st.subjects[i]];
        const double x = pad + (st.pca.coords[i][0] - x0) * sx, y = H - pad - (st.pca.coords[i][1] - y0) * sy;
        const char* col = sub.label == data::Label::ent ? "#d62728" : "#1f77b4";
        if (sub.gender == data::Gender::f)
            s << "<rect x=\"" << x - 3 << "\" y=\"" << y - 3 << "\" width=\"6\" height=\"6\" fill=\"" << col << "\"/>\n";
        else
            s << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3\" fill=\"" << col << "\"/>\n";
    }
    s << "<text x=\"" << pad << "\" y=\"20\" font-size=\"12\">ENT red, NON blue; circle male, square female</text>\n";
    s << "</svg>\n";
    return s.str();
}

} // namespace pairclf::analysis

#endif // PAIRCLF_ANALYSIS_EMBEDDING_HPP
