#include "gradflow/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace gradflow {
namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 180.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string escape(const std::string& s) {
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

struct Axis {
    bool log = false;
    double lo = 0.0;
    double hi = 1.0;

    bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
    double t(double v) const { return log ? std::log10(v) : v; }

    void fit(const std::vector<double>& vals) {
        double a = std::numeric_limits<double>::infinity();
        double b = -a;
        for (double v : vals) {
            if (!usable(v)) continue;
            a = std::min(a, t(v));
            b = std::max(b, t(v));
        }
        if (!std::isfinite(a)) {
            a = 0.0;
            b = 1.0;
        }
        if (log) {
            a = std::floor(a);
            b = std::ceil(b);
        }
        if (b - a <= 0.0) {
            a -= 0.5;
            b += 0.5;
        }
        lo = a;
        hi = b;
    }

    std::vector<double> ticks() const {
        std::vector<double> out;
        if (log) {
            const int span = static_cast<int>(hi - lo);
            const int step = std::max(1, span / 8);
            for (int e = static_cast<int>(lo); e <= static_cast<int>(hi); e += step) out.push_back(e);
        } else {
            for (int i = 0; i <= 5; ++i) out.push_back(lo + (hi - lo) * i / 5.0);
        }
        return out;
    }
};

}  // namespace

std::string render_svg(const PlotSpec& spec, std::span<const PlotSeries> series) {
    Axis ax{spec.log_x}, ay{spec.log_y};
    std::vector<double> xs, ys;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (ax.usable(s.x[i]) && ay.usable(s.y[i])) {
                xs.push_back(s.x[i]);
                ys.push_back(s.y[i]);
            }
        }
    }
    ax.fit(xs);
    ay.fit(ys);
    const double pw = kWidth - kLeft - kRight;
    const double ph = kHeight - kTop - kBottom;
    auto px = [&](double v) { return kLeft + (ax.t(v) - ax.lo) / (ax.hi - ax.lo) * pw; };
    auto py = [&](double v) { return kTop + ph - (ay.t(v) - ay.lo) / (ay.hi - ay.lo) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(spec.title) << "</text>\n";
    o << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw) << "\" height=\""
      << num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";

    for (double t : ax.ticks()) {
        const double x = kLeft + (t - ax.lo) / (ax.hi - ax.lo) * pw;
        o << "<line x1=\"" << num(x) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(x) << "\" y2=\""
          << num(kTop + ph + 5) << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << num(x) << "\" y=\"" << num(kTop + ph + 18) << "\" text-anchor=\"middle\">"
          << (ax.log ? "1e" + tick_label(t) : tick_label(t)) << "</text>\n";
    }
    for (double t : ay.ticks()) {
        const double y = kTop + ph - (t - ay.lo) / (ay.hi - ay.lo) * ph;
        o << "<line x1=\"" << num(kLeft - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(kLeft) << "\" y2=\""
          << num(y) << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">"
          << (ay.log ? "1e" + tick_label(t) : tick_label(t)) << "</text>\n";
    }
    o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 15) << "\" text-anchor=\"middle\">"
      << escape(spec.x_label) << "</text>\n";
    o << "<text x=\"18\" y=\"" << num(kTop + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << num(kTop + ph / 2) << ")\">" << escape(spec.y_label) << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % std::size(kPalette)];
        const std::size_t n = std::min(s.x.size(), s.y.size());
        if (spec.scatter) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) continue;
                o << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i])) << "\" r=\"3\" fill=\""
                  << color << "\" fill-opacity=\"0.7\"/>\n";
            }
        } else {
            std::string path;
            bool pen_down = false;
            for (std::size_t i = 0; i < n; ++i) {
                if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) {
                    pen_down = false;
                    continue;
                }
                path += (pen_down ? "L" : "M") + num(px(s.x[i])) + " " + num(py(s.y[i])) + " ";
                pen_down = true;
            }
            if (!path.empty()) {
                path.pop_back();
                o << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
            }
        }
        const double ly = kTop + 10 + 18.0 * static_cast<double>(si);
        o << "<rect x=\"" << num(kLeft + pw + 12) << "\" y=\"" << num(ly - 8) << "\" width=\"12\" height=\"10\" fill=\""
          << color << "\"/>\n";
        o << "<text x=\"" << num(kLeft + pw + 30) << "\" y=\"" << num(ly + 1) << "\">" << escape(s.label)
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace gradflow
