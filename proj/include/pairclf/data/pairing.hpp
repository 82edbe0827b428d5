#ifndef PAIRCLF_DATA_PAIRING_HPP
#define PAIRCLF_DATA_PAIRING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pairclf/core/error.hpp"
#include "pairclf/core/prng.hpp"
#include "pairclf/data/manifest.hpp"

namespace pairclf::data {

/// Target 0: the left subject is the entrepreneur. Target 1: the right one is.
struct PairSample {
    std::string left_id;
    std::string right_id;
    int target = 0;

    const std::string& ent_id() const { return target == 0 ? left_id : right_id; }
    const std::string& non_id() const { return target == 0 ? right_id : left_id; }

    PairSample swapped() const { return {right_id, left_id, 1 - target}; }

    friend bool operator==(const PairSample&, const PairSample&) = default;
};

struct PairOptions {
    /// Number of pairs; default is the sum over strata of 2 * min(#ENT, #NON).
    std::optional<std::size_t> n_pairs;
    /// Gender strata to draw from; default is every gender with both labels.
    std::optional<std::vector<Gender>> genders;
};

inline std::size_t default_pair_count(const std::vector<SubjectRecord>& subjects) {
    std::map<Gender, std::pair<std::size_t, std::size_t>> counts;
    for (const auto& s : subjects) (s.label == Label::ent ? counts[s.gender].first : counts[s.gender].second)++;
    std::size_t n = 0;
    for (const auto& [g, c] : counts) n += 2 * std::min(c.first, c.second);
    return n;
}

/// Draws ENT/NON same-gender pairs. The stratum of each pair is drawn with
/// probability proportional to #ENT * #NON in it, the ENT side is placed left
/// or right by a fair coin, and no unordered pair is emitted twice.
inline std::vector<PairSample> generate_pairs(const std::vector<SubjectRecord>& subjects, const PairOptions& opts,
                                              std::uint64_t seed) {
    struct Stratum {
        Gender gender;
        std::vector<std::size_t> ent, non;
        std::uint64_t combos() const { return static_cast<std::uint64_t>(ent.size()) * non.size(); }
    };
    std::vector<Stratum> all{{Gender::m, {}, {}}, {Gender::f, {}, {}}, {Gender::x, {}, {}}};
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        auto& st = all[static_cast<std::size_t>(subjects[i].gender)];
        (subjects[i].label == Label::ent ? st.ent : st.non).push_back(i);
    }
    std::vector<Stratum> strata;
    if (opts.genders) {
        for (Gender g : *opts.genders) {
            const auto& st = all[static_cast<std::size_t>(g)];
            if (st.ent.empty() || st.non.empty())
                throw ProtocolError(std::string("gender stratum ") + to_string(g) + " has no " +
                                    (st.ent.empty() ? "ENT" : "NON") + " subject");
            strata.push_back(st);
        }
    } else {
        for (const auto& st : all)
            if (!st.ent.empty() && !st.non.empty()) strata.push_back(st);
    }
    if (strata.empty()) throw ProtocolError("no gender stratum contains both an ENT and a NON subject");

    std::uint64_t total = 0;
    for (const auto& st : strata) total += st.combos();
    std::size_t requested = opts.n_pairs.value_or(0);
    if (!opts.n_pairs) {
        for (const auto& st : strata) requested += 2 * std::min(st.ent.size(), st.non.size());
    }
    if (requested > total)
        throw ProtocolError("requested " + std::to_string(requested) + " pairs but only " + std::to_string(total) +
                            " distinct ENT/NON same-gender pairs exist");

    Prng rng(seed);
    std::vector<std::pair<std::size_t, std::size_t>> chosen;  // (ent index, non index)
    chosen.reserve(requested);
    if (total <= 4 * static_cast<std::uint64_t>(requested)) {
        // Dense request: enumerate every combination and take a random subset.
        std::vector<std::pair<std::size_t, std::size_t>> everything;
        everything.reserve(total);
        for (const auto& st : strata)
            for (auto e : st.ent)
                for (auto n : st.non) everything.emplace_back(e, n);
        for (std::size_t i = 0; i < requested; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(everything.size() - i));
            std::swap(everything[i], everything[j]);
            chosen.push_back(everything[i]);
        }
    } else {
        std::unordered_set<std::uint64_t> used;
        while (chosen.size() < requested) {
            std::uint64_t w = rng.below(total);
            std::size_t s = 0;
            while (w >= strata[s].combos()) w -= strata[s++].combos();
            const auto e = strata[s].ent[rng.below(strata[s].ent.size())];
            const auto n = strata[s].non[rng.below(strata[s].non.size())];
            if (used.insert((static_cast<std::uint64_t>(e) << 32) | n).second) chosen.emplace_back(e, n);
        }
    }

    std::vector<PairSample> pairs;
    pairs.reserve(chosen.size());
    for (auto [e, n] : chosen) {
        if (rng.below(2) == 0)
            pairs.push_back({subjects[e].subject_id, subjects[n].subject_id, 0});
        else
            pairs.push_back({subjects[n].subject_id, subjects[e].subject_id, 1});
    }
    return pairs;
}

struct SplitConfig {
    double train_fraction = 0.75;
    double validation_fraction_of_train = 0.10;
    bool subject_disjoint = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0,1)");
        if (!(validation_fraction_of_train > 0.0 && validation_fraction_of_train < 1.0))
            throw ConfigError("validation_fraction_of_train must lie in (0,1)");
    }
};

struct PairSplit {
    std::vector<PairSample> train;
    std::vector<PairSample> validation;
    std::vector<PairSample> test;
    /// Pairs discarded because they straddle the subject-disjoint boundary.
    std::size_t dropped = 0;
};

namespace detail {

inline long round_half_up(double v) { return static_cast<long>(std::floor(v + 0.5)); }

} // namespace detail

/// Splits pairs into train / validation / test.
///
/// Pair-level mode shuffles the pairs and cuts them. Subject-disjoint mode
/// moves subjects, in shuffled order, into the test side until pairs fully
/// inside it reach the test fraction of all non-straddling pairs; straddling
/// pairs are dropped and the larger side is trimmed so the fraction holds to
/// within one pair.
inline PairSplit split_pairs(const std::vector<PairSample>& pairs, const SplitConfig& cfg) {
    cfg.validate();
    if (pairs.empty()) throw ProtocolError("cannot split an empty pair set");
    Prng rng(cfg.seed);
    PairSplit out;
    std::vector<PairSample> pool, test;
    const double test_fraction = 1.0 - cfg.train_fraction;

    if (!cfg.subject_disjoint) {
        auto order = rng.permutation(pairs.size());
        const auto n_pool = static_cast<std::size_t>(detail::round_half_up(cfg.train_fraction * static_cast<double>(pairs.size())));
        for (std::size_t i = 0; i < order.size(); ++i) (i < n_pool ? pool : test).push_back(pairs[order[i]]);
    } else {
        std::vector<std::string> ids;
        std::unordered_map<std::string, std::vector<std::size_t>> touching;
        for (std::size_t p = 0; p < pairs.size(); ++p)
            for (const auto* id : {&pairs[p].left_id, &pairs[p].right_id}) {
                auto [it, fresh] = touching.try_emplace(*id);
                if (fresh) ids.push_back(*id);
                it->second.push_back(p);
            }
        rng.shuffle(ids);
        std::vector<int> inside(pairs.size(), 0);
        std::size_t n_test = 0, n_train = pairs.size();
        for (const auto& id : ids) {
            if (n_test + n_train > 0 &&
                static_cast<double>(n_test) >= test_fraction * static_cast<double>(n_test + n_train))
                break;
            for (auto p : touching[id]) {
                if (inside[p] == 0) --n_train;
                if (++inside[p] == 2) ++n_test;
            }
        }
        if (n_test == 0 || n_train == 0)
            throw ProtocolError("subject-disjoint split is infeasible: " +
                                std::string(n_test == 0 ? "no pair fits entirely in the test side"
                                                        : "no pair remains entirely in the training side"));
        auto order = rng.permutation(pairs.size());
        for (auto p : order) {
            if (inside[p] == 2) test.push_back(pairs[p]);
            else if (inside[p] == 0) pool.push_back(pairs[p]);
            else ++out.dropped;
        }
        const double ratio = test_fraction / cfg.train_fraction;
        const auto want_test = static_cast<std::size_t>(detail::round_half_up(ratio * static_cast<double>(pool.size())));
        if (test.size() > want_test && want_test > 0) {
            out.dropped += test.size() - want_test;
            test.resize(want_test);
        } else if (test.size() < want_test) {
            const auto want_pool = static_cast<std::size_t>(detail::round_half_up(static_cast<double>(test.size()) / ratio));
            if (want_pool < pool.size()) {
                out.dropped += pool.size() - want_pool;
                pool.resize(want_pool);
            }
        }
        if (test.empty() || pool.empty()) throw ProtocolError("subject-disjoint split is infeasible for these pairs");
    }

    const auto n_val = static_cast<std::size_t>(
        detail::round_half_up(cfg.validation_fraction_of_train * static_cast<double>(pool.size())));
    auto vorder = rng.permutation(pool.size());
    std::vector<bool> is_val(pool.size(), false);
    for (std::size_t i = 0; i < n_val && i < vorder.size(); ++i) is_val[vorder[i]] = true;
    for (std::size_t i = 0; i < pool.size(); ++i) (is_val[i] ? out.validation : out.train).push_back(pool[i]);
    out.test = std::move(test);
    return out;
}

inline constexpr std::string_view kPairsHeader = "left_id,right_id,target";

inline void write_pairs(const std::vector<PairSample>& pairs, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << kPairsHeader << '\n';
    for (const auto& p : pairs) out << p.left_id << ',' << p.right_id << ',' << p.target << '\n';
}

inline std::vector<PairSample> read_pairs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open pair file " + path.string());
    std::string line;
    if (!std::getline(in, line) || detail::strip_cr(line) != kPairsHeader)
        throw FormatError(path.string() + ": header must be '" + std::string(kPairsHeader) + "'");
    std::vector<PairSample> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != 3 || (f[2] != "0" && f[2] != "1") || f[0].empty() || f[1].empty())
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed pair row");
        out.push_back({f[0], f[1], f[2] == "1" ? 1 : 0});
    }
    return out;
}

/// Checks every pair against the pairing invariants: both ids known, exactly
/// one ENT, equal genders, target matching the ENT side.
inline void check_pairs(const Dataset& ds, const std::vector<PairSample>& pairs) {
    for (const auto& p : pairs) {
        const auto& l = ds.subjects[ds.index_of(p.left_id)];
        const auto& r = ds.subjects[ds.index_of(p.right_id)];
        if (l.label == r.label) throw ProtocolError("pair " + p.left_id + "/" + p.right_id + " lacks exactly one ENT");
        if (l.gender != r.gender) throw ProtocolError("pair " + p.left_id + "/" + p.right_id + " crosses gender");
        if ((p.target == 0) != (l.label == Label::ent))
            throw ProtocolError("pair " + p.left_id + "/" + p.right_id + " target does not mark the ENT side");
    }
}

} // namespace pairclf::data

#endif // PAIRCLF_DATA_PAIRING_HPP
