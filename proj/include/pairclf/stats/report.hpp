#ifndef PAIRCLF_STATS_REPORT_HPP
#define PAIRCLF_STATS_REPORT_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "pairclf/report/svg.hpp"
#include "pairclf/stats/decisions.hpp"
#include "pairclf/stats/summary.hpp"
#include "pairclf/stats/welch.hpp"

namespace pairclf::stats {

struct GroupSummary {
    std::string group;
    std::size_t n_respondents = 0;
    std::optional<std::size_t> n_decisions;
    std::optional<std::size_t> correct_decisions;
    double mean = 0.0;
    std::optional<double> sd;
    /// Welch test of the model's trial accuracies against this group.
    std::optional<WelchResult> test;

    /// Correct / retained over all of the group's decisions, in percent.
    std::optional<double> decision_accuracy() const {
        if (!n_decisions || !correct_decisions || *n_decisions == 0) return std::nullopt;
        return 100.0 * static_cast<double>(*correct_decisions) / static_cast<double>(*n_decisions);
    }
};

/// Mean and sample SD of per-respondent (or per-trial) accuracies.
inline GroupSummary summarize_group(std::span<const double> accuracies, std::string group) {
    if (accuracies.empty()) throw ProtocolError("group '" + group + "' has no accuracies");
    const MeanSd m = mean_sd(accuracies);
    GroupSummary g;
    g.group = std::move(group);
    g.n_respondents = m.n;
    g.mean = m.mean;
    g.sd = m.sd;
    return g;
}

inline GroupSummary summarize_group(const std::vector<double>& accuracies, std::string group) {
    return summarize_group(std::span<const double>(accuracies), std::move(group));
}

inline GroupSummary summarize_respondents(const std::vector<const Respondent*>& rs, std::string group) {
    std::vector<double> acc;
    std::size_t dec = 0, cor = 0;
    for (const auto* r : rs) {
        acc.push_back(*r->accuracy());
        dec += r->retained();
        cor += r->correct;
    }
    GroupSummary g = summarize_group(acc, std::move(group));
    g.n_decisions = dec;
    g.correct_decisions = cor;
    return g;
}

/// Table-2 layout: the model row, the pooled expert row, one row per expert
/// group, then trained humans and any "other" respondents. Empty groups are
/// left out. Human rows are tested against the model's trial accuracies when
/// `model_accuracies` has at least two values.
inline std::vector<GroupSummary> table2(const Ingested& ing, const std::vector<double>& model_accuracies) {
    std::vector<GroupSummary> rows;
    if (!model_accuracies.empty()) rows.push_back(summarize_group(model_accuracies, "ai_model"));
    auto select = [&](auto pred) {
        std::vector<const Respondent*> out;
        for (const auto& r : ing.respondents)
            if (pred(r.group)) out.push_back(&r);
        return out;
    };
    auto add = [&](const std::vector<const Respondent*>& rs, const std::string& name) {
        if (rs.empty()) return;
        GroupSummary g = summarize_respondents(rs, name);
        if (model_accuracies.size() >= 2 && rs.size() >= 2) {
            std::vector<double> acc;
            for (const auto* r : rs) acc.push_back(*r->accuracy());
            try {
                g.test = welch_t(model_accuracies, acc);
            } catch (const NumericalError&) {
                // both samples constant: no test
            }
        }
        rows.push_back(std::move(g));
    };
    add(select(is_expert), "human_experts");
    for (Group grp : {Group::entrepreneur, Group::educator, Group::researcher, Group::vc_angel, Group::trained, Group::other})
        add(select([grp](Group g) { return g == grp; }), to_string(grp));
    return rows;
}

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline constexpr std::string_view kReportHeader = "group,n_respondents,n_decisions,mean,sd,t,p";

inline std::string report_csv(const std::vector<GroupSummary>& rows) {
    std::string s(kReportHeader);
    s += '\n';
    for (const auto& g : rows) {
        s += g.group + ',' + std::to_string(g.n_respondents) + ',';
        if (g.n_decisions) s += std::to_string(*g.n_decisions);
        s += ',' + fixed(g.mean, 2) + ',';
        if (g.sd) s += fixed(*g.sd, 2);
        s += ',';
        if (g.test) s += fixed(g.test->t, 2) + ',' + fixed(g.test->p, 4);
        else s += ',';
        s += '\n';
    }
    return s;
}

/// Bar chart of group means (SD whiskers) with the 50% chance line.
inline std::string report_svg(const std::vector<GroupSummary>& rows) {
    std::vector<report::Bar> bars;
    for (const auto& g : rows) bars.push_back({g.group, g.mean, g.sd});
    return report::bar_chart_svg("Accuracy of the model vs human judges (%)", bars, 50.0);
}

inline void render_report(const std::vector<GroupSummary>& rows, const std::filesystem::path& csv,
                          const std::filesystem::path& svg) {
    if (rows.empty()) throw ProtocolError("report needs at least one row");
    for (const auto& [path, text] : {std::pair{csv, report_csv(rows)}, std::pair{svg, report_svg(rows)}}) {
        std::ofstream out(path, std::ios::trunc | std::ios::binary);
        if (!out) throw FormatError("cannot write " + path.string());
        out << text;
    }
}

} // namespace pairclf::stats

#endif // PAIRCLF_STATS_REPORT_HPP
