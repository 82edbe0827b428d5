#ifndef PAIRCLF_STATS_DECISIONS_HPP
#define PAIRCLF_STATS_DECISIONS_HPP

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pairclf/core/error.hpp"
#include "pairclf/data/manifest.hpp"

namespace pairclf::stats {

enum class Group { entrepreneur, educator, researcher, vc_angel, trained, other };

inline const char* to_string(Group g) {
    switch (g) {
        case Group::entrepreneur: return "entrepreneur";
        case Group::educator: return "educator";
        case Group::researcher: return "researcher";
        case Group::vc_angel: return "vc_angel";
        case Group::trained: return "trained";
        case Group::other: return "other";
    }
    return "?";
}

inline Group parse_group(const std::string& s) {
    for (Group g : {Group::entrepreneur, Group::educator, Group::researcher, Group::vc_angel, Group::trained, Group::other})
        if (s == to_string(g)) return g;
    throw FormatError("unknown respondent group '" + s + "'");
}

/// The untrained expert groups pooled as "Human experts".
inline bool is_expert(Group g) {
    return g == Group::entrepreneur || g == Group::educator || g == Group::researcher || g == Group::vc_angel;
}

struct DecisionRecord {
    std::string respondent_id;
    Group group = Group::other;
    std::string pair_id;
    int correct = 0;
    int recognized = 0;
};

struct Respondent {
    std::string id;
    Group group = Group::other;
    std::size_t decisions = 0;
    std::size_t recognized = 0;
    std::size_t correct = 0;  // among retained decisions

    std::size_t retained() const { return decisions - recognized; }
    /// correct / retained x 100; absent when nothing was retained.
    std::optional<double> accuracy() const {
        if (retained() == 0) return std::nullopt;
        return 100.0 * static_cast<double>(correct) / static_cast<double>(retained());
    }
};

struct Ingested {
    /// Respondents with at least one retained decision, in order of first appearance.
    std::vector<Respondent> respondents;
    /// Respondents whose every decision was dropped as recognized.
    std::vector<Respondent> excluded;
    std::vector<std::string> warnings;
    std::size_t total_decisions = 0;
    std::size_t total_recognized = 0;

    std::size_t retained() const { return total_decisions - total_recognized; }
};

inline constexpr std::string_view kDecisionHeader = "respondent_id,group,pair_id,correct,recognized";

inline int parse_flag(const std::string& s, const char* what, std::size_t line) {
    if (s == "0") return 0;
    if (s == "1") return 1;
    throw FormatError(std::string(what) + " must be 0 or 1 on line " + std::to_string(line) + ", got '" + s + "'");
}

inline std::vector<DecisionRecord> parse_decisions(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || data::detail::strip_cr(line) != kDecisionHeader)
        throw FormatError("decision file must start with header '" + std::string(kDecisionHeader) + "'");
    std::vector<DecisionRecord> out;
    std::set<std::pair<std::string, std::string>> seen;
    std::size_t ln = 1;
    while (std::getline(in, line)) {
        ++ln;
        line = data::detail::strip_cr(line);
        if (line.empty()) continue;
        const auto f = data::detail::split(line, ',');
        if (f.size() != 5) throw FormatError("line " + std::to_string(ln) + ": expected 5 fields");
        if (f[0].empty()) throw FormatError("line " + std::to_string(ln) + ": empty respondent_id");
        DecisionRecord d{f[0], parse_group(f[1]), f[2], parse_flag(f[3], "correct", ln), parse_flag(f[4], "recognized", ln)};
        if (!seen.insert({d.respondent_id, d.pair_id}).second)
            throw FormatError("line " + std::to_string(ln) + ": duplicate decision for respondent " + d.respondent_id +
                              " on pair " + d.pair_id);
        out.push_back(std::move(d));
    }
    return out;
}

/// Applies the exclusion rule: recognized decisions are dropped, and a
/// respondent left with no decisions is excluded with a warning.
inline Ingested ingest_decisions(const std::vector<DecisionRecord>& rows) {
    Ingested res;
    std::vector<Respondent> all;
    std::map<std::string, std::size_t> index;
    for (const auto& d : rows) {
        auto [it, fresh] = index.try_emplace(d.respondent_id, all.size());
        if (fresh) all.push_back({d.respondent_id, d.group});
        Respondent& r = all[it->second];
        if (r.group != d.group)
            throw FormatError("respondent " + d.respondent_id + " appears under more than one group");
        ++r.decisions;
        ++res.total_decisions;
        if (d.recognized) {
            ++r.recognized;
            ++res.total_recognized;
        } else if (d.correct) {
            ++r.correct;
        }
    }
    for (auto& r : all) {
        if (r.retained() == 0) {
            res.warnings.push_back("respondent " + r.id + " excluded: every decision was recognized");
            res.excluded.push_back(std::move(r));
        } else {
            res.respondents.push_back(std::move(r));
        }
    }
    return res;
}

inline Ingested ingest_decisions(std::istream& in) { return ingest_decisions(parse_decisions(in)); }

inline Ingested ingest_decisions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open decision file " + path.string());
    return ingest_decisions(in);
}

inline void write_respondents_csv(const Ingested& ing, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "respondent_id,group,decisions,recognized,retained,correct,accuracy\n";
    out.precision(10);
    for (const auto* list : {&ing.respondents, &ing.excluded})
        for (const auto& r : *list) {
            out << r.id << ',' << to_string(r.group) << ',' << r.decisions << ',' << r.recognized << ',' << r.retained()
                << ',' << r.correct << ',';
            if (auto a = r.accuracy()) out << *a;
            out << '\n';
        }
}

} // namespace pairclf::stats

#endif // PAIRCLF_STATS_DECISIONS_HPP
