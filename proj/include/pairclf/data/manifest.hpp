#ifndef PAIRCLF_DATA_MANIFEST_HPP
#define PAIRCLF_DATA_MANIFEST_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pairclf/core/error.hpp"
#include "pairclf/core/fptn.hpp"
#include "pairclf/core/tensor.hpp"

namespace pairclf::data {

enum class Label { ent, non };
enum class Gender { m, f, x };

inline const char* to_string(Label l) { return l == Label::ent ? "ENT" : "NON"; }

inline const char* to_string(Gender g) {
    switch (g) {
        case Gender::m: return "M";
        case Gender::f: return "F";
        case Gender::x: return "X";
    }
    return "?";
}

inline Label parse_label(std::string_view s) {
    if (s == "ENT") return Label::ent;
    if (s == "NON") return Label::non;
    throw FormatError("unknown label '" + std::string(s) + "' (expected ENT or NON)");
}

inline Gender parse_gender(std::string_view s) {
    if (s == "M") return Gender::m;
    if (s == "F") return Gender::f;
    if (s == "X") return Gender::x;
    throw FormatError("unknown gender '" + std::string(s) + "' (expected M, F or X)");
}

/// End-exclusive rectangle on the feature-map grid.
struct Rect {
    std::size_t r0 = 0, r1 = 0, c0 = 0, c1 = 0;

    std::size_t area() const { return (r1 - r0) * (c1 - c0); }
    bool contains(std::size_t r, std::size_t c) const { return r >= r0 && r < r1 && c >= c0 && c < c1; }
    bool fits(std::size_t rows, std::size_t cols) const { return r0 < r1 && c0 < c1 && r1 <= rows && c1 <= cols; }
    friend bool operator==(const Rect&, const Rect&) = default;
};

struct Region {
    std::string name;
    Rect rect;
    friend bool operator==(const Region&, const Region&) = default;
};

struct SubjectRecord {
    std::string subject_id;
    Label label = Label::non;
    Gender gender = Gender::m;
    std::set<std::string> tags;
    std::string feature_file;
    std::vector<Region> regions;

    const Region* find_region(std::string_view name) const {
        for (const auto& r : regions)
            if (r.name == name) return &r;
        return nullptr;
    }
};

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::size_t parse_index(const std::string& s, const std::string& context) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
        throw FormatError("bad grid coordinate '" + s + "' in " + context);
    return static_cast<std::size_t>(std::stoul(s));
}

inline std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

} // namespace detail

/// Parses `name@r0:r1:c0:c1`.
inline Region parse_region(std::string_view text) {
    const auto at = text.find('@');
    if (at == std::string_view::npos || at == 0) throw FormatError("region '" + std::string(text) + "' lacks name@");
    Region region{std::string(text.substr(0, at)), {}};
    const auto coords = detail::split(text.substr(at + 1), ':');
    if (coords.size() != 4) throw FormatError("region '" + std::string(text) + "' needs r0:r1:c0:c1");
    const std::string ctx = "region '" + std::string(text) + "'";
    region.rect = {detail::parse_index(coords[0], ctx), detail::parse_index(coords[1], ctx),
                   detail::parse_index(coords[2], ctx), detail::parse_index(coords[3], ctx)};
    if (region.rect.r0 >= region.rect.r1 || region.rect.c0 >= region.rect.c1)
        throw FormatError(ctx + " is empty or inverted");
    return region;
}

inline std::string format_region(const Region& r) {
    std::ostringstream os;
    os << r.name << '@' << r.rect.r0 << ':' << r.rect.r1 << ':' << r.rect.c0 << ':' << r.rect.c1;
    return os.str();
}

inline constexpr std::string_view kManifestHeader = "subject_id,label,gender,tags,feature_file,regions";

/// Subjects plus their loaded feature maps (H, W, C), index-aligned.
struct Dataset {
    std::vector<SubjectRecord> subjects;
    std::vector<Tensor<float>> features;
    Shape feature_shape;

    std::size_t index_of(const std::string& id) const {
        const auto it = index_.find(id);
        if (it == index_.end()) throw FormatError("unknown subject id '" + id + "'");
        return it->second;
    }

    bool contains(const std::string& id) const { return index_.count(id) != 0; }

    void reindex() {
        index_.clear();
        for (std::size_t i = 0; i < subjects.size(); ++i)
            if (!index_.emplace(subjects[i].subject_id, i).second)
                throw FormatError("duplicate subject_id '" + subjects[i].subject_id + "'");
    }

private:
    std::unordered_map<std::string, std::size_t> index_;
};

/// Checks ids, feature shapes and region bounds; throws FormatError.
inline void validate(Dataset& ds) {
    ds.reindex();
    if (ds.features.size() != ds.subjects.size()) throw FormatError("feature count does not match subject count");
    for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
        const auto& f = ds.features[i];
        if (f.rank() != 3) throw FormatError("feature file for '" + ds.subjects[i].subject_id + "' must be H x W x C");
        if (i == 0) ds.feature_shape = f.shape();
        if (f.shape() != ds.feature_shape)
            throw FormatError("feature shape " + shape_str(f.shape()) + " of '" + ds.subjects[i].subject_id +
                              "' differs from " + shape_str(ds.feature_shape));
        for (const auto& r : ds.subjects[i].regions)
            if (!r.rect.fits(ds.feature_shape[0], ds.feature_shape[1]))
                throw FormatError("region " + format_region(r) + " of '" + ds.subjects[i].subject_id +
                                  "' lies outside the " + shape_str(ds.feature_shape) + " grid");
    }
}

inline std::vector<SubjectRecord> parse_manifest(std::istream& in, const std::string& source = "manifest") {
    std::string line;
    if (!std::getline(in, line) || detail::strip_cr(line) != kManifestHeader)
        throw FormatError(source + ": header must be '" + std::string(kManifestHeader) + "'");
    std::vector<SubjectRecord> out;
    std::set<std::string> seen;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        const std::string where = source + ":" + std::to_string(lineno);
        if (f.size() != 6) throw FormatError(where + ": expected 6 fields, got " + std::to_string(f.size()));
        SubjectRecord rec;
        rec.subject_id = f[0];
        if (rec.subject_id.empty()) throw FormatError(where + ": empty subject_id");
        if (!seen.insert(rec.subject_id).second) throw FormatError(where + ": duplicate subject_id '" + f[0] + "'");
        rec.label = parse_label(f[1]);
        rec.gender = parse_gender(f[2]);
        if (!f[3].empty())
            for (auto& t : detail::split(f[3], ';'))
                if (!t.empty()) rec.tags.insert(t);
        rec.feature_file = f[4];
        if (rec.feature_file.empty()) throw FormatError(where + ": empty feature_file");
        if (!f[5].empty())
            for (auto& r : detail::split(f[5], ';')) {
                auto region = parse_region(r);
                if (rec.find_region(region.name)) throw FormatError(where + ": region '" + region.name + "' repeated");
                rec.regions.push_back(std::move(region));
            }
        out.push_back(std::move(rec));
    }
    return out;
}

/// Reads the manifest CSV and every referenced FPTN file. Relative feature
/// paths resolve against the manifest's directory.
inline Dataset load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest " + path.string());
    Dataset ds;
    ds.subjects = parse_manifest(in, path.string());
    const auto base = path.parent_path();
    ds.features.reserve(ds.subjects.size());
    for (const auto& s : ds.subjects) {
        std::filesystem::path fp(s.feature_file);
        if (fp.is_relative()) fp = base / fp;
        if (!std::filesystem::exists(fp))
            throw FormatError("missing feature file " + fp.string() + " for '" + s.subject_id + "'");
        ds.features.push_back(fptn::read(fp));
    }
    validate(ds);
    return ds;
}

inline void write_manifest(const std::vector<SubjectRecord>& subjects, std::ostream& out) {
    out << kManifestHeader << '\n';
    for (const auto& s : subjects) {
        out << s.subject_id << ',' << to_string(s.label) << ',' << to_string(s.gender) << ',';
        bool first = true;
        for (const auto& t : s.tags) out << (first ? "" : ";") << t, first = false;
        out << ',' << s.feature_file << ',';
        for (std::size_t i = 0; i < s.regions.size(); ++i) out << (i ? ";" : "") << format_region(s.regions[i]);
        out << '\n';
    }
}

} // namespace pairclf::data

#endif // PAIRCLF_DATA_MANIFEST_HPP
