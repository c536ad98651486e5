#include "gmfg/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "gmfg/error.hpp"

namespace gmfg {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

std::string escape(const std::string& s)
{
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

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

struct Axis {
    bool log = false;
    double lo = 0.0, hi = 1.0;

    double map(double v) const { return log ? std::log10(v) : v; }
    bool drawable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }

    void fit(const std::vector<double>& values)
    {
        double a = std::numeric_limits<double>::infinity(), b = -a;
        for (double v : values)
            if (drawable(v)) {
                a = std::min(a, map(v));
                b = std::max(b, map(v));
            }
        if (!std::isfinite(a)) a = 0.0, b = 1.0;
        if (b - a < 1e-12 * std::max(1.0, std::abs(a))) {
            double pad = log ? 0.5 : std::max(0.5, 0.1 * std::abs(a));
            a -= pad;
            b += pad;
        } else {
            double pad = 0.05 * (b - a);
            a -= pad;
            b += pad;
        }
        lo = a;
        hi = b;
    }

    std::vector<double> ticks() const
    {
        std::vector<double> t;
        if (log) {
            for (double e = std::ceil(lo); e <= hi; e += 1.0) t.push_back(e);
            if (t.size() >= 2) return t;
            t.clear();
        }
        double span = hi - lo;
        double step = std::pow(10.0, std::floor(std::log10(span / 5.0)));
        for (double m : {1.0, 2.0, 5.0, 10.0})
            if (span / (step * m) <= 6.0) {
                step *= m;
                break;
            }
        for (double v = std::ceil(lo / step) * step; v <= hi + 1e-12 * span; v += step) t.push_back(v);
        return t;
    }

    std::string label(double pos) const { return log ? fmt(std::pow(10.0, pos)) : fmt(pos); }
};

} // namespace

std::string render_svg(const PlotSpec& spec, const std::vector<PlotSeries>& series)
{
    const double left = 72, right = 150, top = 40, bottom = 56;
    const double W = spec.width, H = spec.height;
    const double pw = W - left - right, ph = H - top - bottom;

    Axis ax{spec.log_x}, ay{spec.log_y};
    std::vector<double> all_x, all_y;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw ContractError("plot series '" + s.label + "' has mismatched lengths");
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (ax.drawable(s.x[i]) && ay.drawable(s.y[i])) {
                all_x.push_back(s.x[i]);
                all_y.push_back(s.y[i]);
            }
    }
    ax.fit(all_x);
    ay.fit(all_y);
    auto px = [&](double v) { return left + (ax.map(v) - ax.lo) / (ax.hi - ax.lo) * pw; };
    auto py = [&](double v) { return top + ph - (ay.map(v) - ay.lo) / (ay.hi - ay.lo) * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
       << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(spec.title)
       << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#333\"/>\n";

    for (double t : ax.ticks()) {
        double x = left + (t - ax.lo) / (ax.hi - ax.lo) * pw;
        os << "<line x1=\"" << x << "\" y1=\"" << top << "\" x2=\"" << x << "\" y2=\"" << top + ph
           << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << x << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << ax.label(t)
           << "</text>\n";
    }
    for (double t : ay.ticks()) {
        double y = top + ph - (t - ay.lo) / (ay.hi - ay.lo) * ph;
        os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + pw << "\" y2=\"" << y
           << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << ay.label(t) << "</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 14 << "\" text-anchor=\"middle\">" << escape(spec.x_label)
       << "</text>\n";
    os << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
       << escape(spec.y_label) << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % (sizeof kPalette / sizeof kPalette[0])];
        std::ostringstream pts;
        int count = 0;
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            double x = series[s].x[i], y = series[s].y[i];
            if (!ax.drawable(x) || !ay.drawable(y)) continue;
            pts << px(x) << ',' << py(y) << ' ';
            ++count;
        }
        if (count > 1)
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"" << pts.str()
               << "\"/>\n";
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            double x = series[s].x[i], y = series[s].y[i];
            if (!ax.drawable(x) || !ay.drawable(y)) continue;
            os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        double ly = top + 14 + 18.0 * static_cast<double>(s);
        os << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly
           << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << escape(series[s].label) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void write_svg(const std::string& path, const PlotSpec& spec, const std::vector<PlotSeries>& series)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << render_svg(spec, series);
}

} // namespace gmfg
