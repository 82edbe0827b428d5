#ifndef PAIRCLF_ANALYSIS_SALIENCY_HPP
#define PAIRCLF_ANALYSIS_SALIENCY_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pairclf/analysis/common.hpp"
#include "pairclf/core/error.hpp"

namespace pairclf::analysis {

enum class Side { left, right };

inline const char* to_string(Side s) { return s == Side::left ? "left" : "right"; }

inline Side parse_side(const std::string& s) {
    if (s == "left") return Side::left;
    if (s == "right") return Side::right;
    throw ConfigError("side must be 'left' or 'right', got '" + s + "'");
}

struct CellDelta {
    std::size_t row = 0, col = 0;
    double delta = 0.0;
};

struct SaliencyResult {
    model::IndexedPair pair;
    Side side = Side::left;
    std::size_t top_k = 50;
    std::size_t height = 0, width = 0;
    /// Ranked cells, at most top_k of them.
    std::vector<CellDelta> top;
    /// Every cell in row-major order.
    std::vector<double> grid;
};

/// Occlusion sensitivity: each grid cell of one side is zeroed across all
/// channels (and all streams), and the drop in the probability assigned to
/// the correct target is recorded.
inline SaliencyResult occlusion_saliency(const model::PairModel<float>& m, const model::FeatureBank& bank,
                                         const model::IndexedPair& pair, Side side, std::size_t top_k = 50) {
    if (top_k < 1) throw ConfigError("top_k must be at least 1");
    bank.check_compatible(m.config());
    const std::vector<model::IndexedPair> one{pair};
    const auto base = bank.batch(one, {}, 0, 1);
    const Shape& fs = bank.shape();
    const std::size_t H = fs[0], W = fs[1], C = fs[2], cells = H * W;
    const double sgn = pair.target == 1 ? 1.0 : -1.0;
    const double z0 = logits(m, base)[0];

    SaliencyResult res;
    res.pair = pair;
    res.side = side;
    res.top_k = top_k;
    res.height = H;
    res.width = W;
    res.grid.assign(cells, 0.0);

    const auto& src = side == Side::left ? base.left : base.right;
    auto cell_is_zero = [&](std::size_t cell) {
        for (const auto& t : src)
            for (std::size_t ch = 0; ch < C; ++ch)
                if (t[cell * C + ch] != 0.0f) return false;
        return true;
    };

    std::vector<std::size_t> todo;
    for (std::size_t cell = 0; cell < cells; ++cell)
        if (!cell_is_zero(cell)) todo.push_back(cell);  // occluding a zero cell is the identity

    constexpr std::size_t chunk = 49;
    const std::size_t n = shape_size(fs);
    for (std::size_t b = 0; b < todo.size(); b += chunk) {
        const std::size_t e = std::min(todo.size(), b + chunk), B = e - b;
        model::PairInput<float> in;
        for (std::size_t s = 0; s < base.left.size(); ++s) {
            Shape bs{B, H, W, C};
            Tensor<float> l(bs), r(bs);
            for (std::size_t i = 0; i < B; ++i) {
                std::copy(base.left[s].ptr(), base.left[s].ptr() + n, l.ptr() + i * n);
                std::copy(base.right[s].ptr(), base.right[s].ptr() + n, r.ptr() + i * n);
                float* tgt = (side == Side::left ? l : r).ptr() + i * n + todo[b + i] * C;
                std::fill(tgt, tgt + C, 0.0f);
            }
            in.left.push_back(std::move(l));
            in.right.push_back(std::move(r));
        }
        const auto z = logits(m, in);
        for (std::size_t i = 0; i < B; ++i) res.grid[todo[b + i]] = sigmoid_diff(sgn * z0, sgn * z[i]);
    }

    std::vector<CellDelta> all;
    all.reserve(cells);
    for (std::size_t cell = 0; cell < cells; ++cell) all.push_back({cell / W, cell % W, res.grid[cell]});
    std::stable_sort(all.begin(), all.end(), [](const CellDelta& a, const CellDelta& b) {
        if (a.delta != b.delta) return a.delta > b.delta;
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    all.resize(std::min(top_k, all.size()));
    res.top = std::move(all);
    return res;
}

/// Fraction of the ranked cells that fall inside `rect`.
inline double fraction_inside(const SaliencyResult& r, const data::Rect& rect, std::size_t k) {
    const std::size_t n = std::min(k, r.top.size());
    if (n == 0) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < n; ++i) hit += rect.contains(r.top[i].row, r.top[i].col) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(n);
}

inline void write_saliency_csv(const SaliencyResult& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "rank,row,col,delta\n";
    out.precision(12);
    for (std::size_t i = 0; i < r.top.size(); ++i)
        out << i + 1 << ',' << r.top[i].row << ',' << r.top[i].col << ',' << r.top[i].delta << '\n';
}

/// Grid heatmap: red intensity follows positive deltas, top-ranked cells are outlined.
inline std::string saliency_svg(const SaliencyResult& r) {
    const int cell = 24, pad = 10;
    const int w = static_cast<int>(r.width) * cell + 2 * pad, h = static_cast<int>(r.height) * cell + 2 * pad;
    double peak = 0.0;
    for (double d : r.grid) peak = std::max(peak, d);
    std::vector<char> ranked(r.grid.size(), 0);
    for (const auto& c : r.top) ranked[c.row * r.width + c.col] = 1;
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < r.grid.size(); ++i) {
        const double a = peak > 0.0 ? std::max(0.0, r.grid[i]) / peak : 0.0;
        const int shade = static_cast<int>(std::lround(255.0 * (1.0 - a)));
        s << "<rect x=\"" << pad + static_cast<int>(i % r.width) * cell << "\" y=\""
          << pad + static_cast<int>(i / r.width) * cell << "\" width=\"" << cell << "\" height=\"" << cell
          << "\" fill=\"rgb(255," << shade << ',' << shade << ")\" stroke=\"" << (ranked[i] ? "#e0b000" : "#dddddd")
          << "\" stroke-width=\"" << (ranked[i] ? 2 : 1) << "\"/>\n";
    }
    s << "</svg>\n";
    return s.str();
}

} // namespace pairclf::analysis

#endif // PAIRCLF_ANALYSIS_SALIENCY_HPP
