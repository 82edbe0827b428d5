#ifndef PAIRCLF_REPORT_SVG_HPP
#define PAIRCLF_REPORT_SVG_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace pairclf::report {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Bar {
    std::string label;
    double value = 0.0;
    std::optional<double> error;  // half-height of an error whisker
};

/// Vertical bar chart on a 0..100 percent axis with an optional dashed reference line.
inline std::string bar_chart_svg(const std::string& title, const std::vector<Bar>& bars,
                                 std::optional<double> reference = std::nullopt) {
    const double bw = 70, gap = 20, left = 50, top = 40, plot_h = 300, bottom = 90;
    const double W = left + static_cast<double>(bars.size()) * (bw + gap) + gap, H = top + plot_h + bottom;
    auto y_of = [&](double v) { return top + plot_h * (1.0 - std::clamp(v, 0.0, 100.0) / 100.0); };
    std::ostringstream s;
    s.precision(6);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 100; t += 25)
        s << "<text x=\"" << left - 6 << "\" y=\"" << y_of(t) + 4 << "\" font-size=\"10\" text-anchor=\"end\">" << t
          << "</text>\n";
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double x = left + gap + static_cast<double>(i) * (bw + gap);
        const double y = y_of(bars[i].value);
        s << "<rect class=\"bar\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << bw << "\" height=\"" << top + plot_h - y
          << "\" fill=\"#4c72b0\"/>\n";
        if (bars[i].error) {
            const double cx = x + bw / 2;
            s << "<line x1=\"" << cx << "\" y1=\"" << y_of(bars[i].value - *bars[i].error) << "\" x2=\"" << cx
              << "\" y2=\"" << y_of(bars[i].value + *bars[i].error) << "\" stroke=\"black\"/>\n";
        }
        s << "<text x=\"" << x + bw / 2 << "\" y=\"" << y - 4 << "\" font-size=\"10\" text-anchor=\"middle\">"
          << std::round(bars[i].value * 100.0) / 100.0 << "</text>\n";
        s << "<text x=\"" << x + bw / 2 << "\" y=\"" << top + plot_h + 16
          << "\" font-size=\"10\" text-anchor=\"middle\">" << xml_escape(bars[i].label) << "</text>\n";
    }
    if (reference)
        s << "<line class=\"reference\" x1=\"" << left << "\" y1=\"" << y_of(*reference) << "\" x2=\"" << W - gap
          << "\" y2=\"" << y_of(*reference) << "\" stroke=\"#c44e52\" stroke-dasharray=\"6,4\"/>\n";
    s << "</svg>\n";
    return s.str();
}

} // namespace pairclf::report

#endif // PAIRCLF_REPORT_SVG_HPP
