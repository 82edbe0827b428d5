#ifndef PAIRCLF_ANALYSIS_SUBGROUP_HPP
#define PAIRCLF_ANALYSIS_SUBGROUP_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pairclf/core/error.hpp"
#include "pairclf/data/manifest.hpp"
#include "pairclf/model/evaluate.hpp"

namespace pairclf::analysis {

/// Grouping attribute: the gender, or presence of a tag (values "<tag>" and "not-<tag>").
struct GroupBy {
    enum class Kind { gender, tag } kind = Kind::gender;
    std::string tag;

    static GroupBy gender() { return {}; }
    static GroupBy by_tag(std::string t) { return {Kind::tag, std::move(t)}; }

    std::string value(const data::SubjectRecord& s) const {
        if (kind == Kind::gender) return data::to_string(s.gender);
        return s.tags.count(tag) ? tag : "not-" + tag;
    }

    std::vector<std::string> domain() const {
        if (kind == Kind::gender) return {"M", "F", "X"};
        return {tag, "not-" + tag};
    }
};

struct SubgroupRow {
    std::string group;
    model::ConfusionCounts counts;
    double accuracy = 0.0;
};

struct SubgroupTable {
    std::vector<SubgroupRow> rows;
    /// Groups of the attribute's domain that had no pairs.
    std::vector<std::string> empty_groups;
    model::ConfusionCounts overall;
};

/// Pairs are scored once as a whole set and then partitioned, so the
/// size-weighted group accuracies reproduce the overall accuracy exactly.
inline SubgroupTable subgroup_accuracy(const model::PairModel<float>& m, const model::FeatureBank& bank,
                                       const data::Dataset& ds, std::span<const model::IndexedPair> pairs,
                                       const GroupBy& by,
                                       model::Orientation orientation = model::Orientation::symmetrized) {
    if (pairs.empty()) throw ProtocolError("subgroup accuracy of an empty pair set");
    std::vector<std::string> keys;
    keys.reserve(pairs.size());
    for (const auto& p : pairs) {
        const std::string a = by.value(ds.subjects.at(p.left)), b = by.value(ds.subjects.at(p.right));
        if (a != b)
            throw ProtocolError("pair " + ds.subjects[p.left].subject_id + "/" + ds.subjects[p.right].subject_id +
                                " disagrees on the grouping attribute");
        keys.push_back(a);
    }
    const auto preds = model::predict_pairs(m, bank, pairs, orientation);
    std::map<std::string, model::ConfusionCounts> groups;
    SubgroupTable t;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        groups[keys[i]].add(pairs[i].target, preds[i].predicted);
        t.overall.add(pairs[i].target, preds[i].predicted);
    }
    for (const auto& g : by.domain()) {
        auto it = groups.find(g);
        if (it == groups.end()) {
            t.empty_groups.push_back(g);
            continue;
        }
        t.rows.push_back({g, it->second, model::accuracy(it->second)});
    }
    return t;
}

inline void write_subgroup_csv(const SubgroupTable& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "group,n,correct,accuracy\n";
    out.precision(10);
    for (const auto& r : t.rows) out << r.group << ',' << r.counts.total() << ',' << r.counts.correct() << ',' << r.accuracy << '\n';
    out << "all," << t.overall.total() << ',' << t.overall.correct() << ',' << model::accuracy(t.overall) << '\n';
    for (const auto& g : t.empty_groups) out << "# no pairs in group " << g << '\n';
}

} // namespace pairclf::analysis

#endif // PAIRCLF_ANALYSIS_SUBGROUP_HPP
