// Hand-rolled SVG emission: line plots (optionally with green/red shading of
// the sign of the first series, the delta-curve convention) and bar charts.
// Output is deliberately plain, deterministic, well-formed XML.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "flowdn/tensor.hpp"

namespace flowdn::svg {

struct Series {
    std::string name;
    std::vector<double> x, y;
    std::string color = "#1f77b4";
};

struct PlotOptions {
    std::string title, x_label, y_label;
    int width = 640, height = 420;
    bool shade_sign = false;  // fill series[0] green above zero, red below
};

namespace detail {

inline std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&')
            out += "&amp;";
        else if (c == '<')
            out += "&lt;";
        else if (c == '>')
            out += "&gt;";
        else
            out += c;
    }
    return out;
}

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

struct Frame {
    double x0, x1, y0, y1;       // data range
    double px0, px1, py0, py1;   // pixel box (py0 is top)
    double sx(double x) const { return px0 + (x - x0) / (x1 - x0) * (px1 - px0); }
    double sy(double y) const { return py1 - (y - y0) / (y1 - y0) * (py1 - py0); }
};

inline double nice_step(double span) {
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double r = raw / mag;
    return (r < 1.5 ? 1.0 : r < 3.5 ? 2.0 : r < 7.5 ? 5.0 : 10.0) * mag;
}

inline void axes(std::string& out, const Frame& f, const PlotOptions& opt) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "<rect x='%g' y='%g' width='%g' height='%g' fill='none' stroke='#444'/>\n",
                  f.px0, f.py0, f.px1 - f.px0, f.py1 - f.py0);
    out += buf;
    const double xs = nice_step(f.x1 - f.x0), ys = nice_step(f.y1 - f.y0);
    for (double x = std::ceil(f.x0 / xs) * xs; x <= f.x1 + 1e-12; x += xs) {
        std::snprintf(buf, sizeof buf,
                      "<line x1='%g' y1='%g' x2='%g' y2='%g' stroke='#ccc' stroke-width='0.5'/>\n"
                      "<text x='%g' y='%g' font-size='11' text-anchor='middle'>%s</text>\n",
                      f.sx(x), f.py0, f.sx(x), f.py1, f.sx(x), f.py1 + 16, num(x).c_str());
        out += buf;
    }
    for (double y = std::ceil(f.y0 / ys) * ys; y <= f.y1 + 1e-12; y += ys) {
        std::snprintf(buf, sizeof buf,
                      "<line x1='%g' y1='%g' x2='%g' y2='%g' stroke='#ccc' stroke-width='0.5'/>\n"
                      "<text x='%g' y='%g' font-size='11' text-anchor='end'>%s</text>\n",
                      f.px0, f.sy(y), f.px1, f.sy(y), f.px0 - 6, f.sy(y) + 4, num(y).c_str());
        out += buf;
    }
    if (!opt.title.empty()) {
        std::snprintf(buf, sizeof buf,
                      "<text x='%g' y='20' font-size='14' text-anchor='middle'>%s</text>\n",
                      0.5 * (f.px0 + f.px1), esc(opt.title).c_str());
        out += buf;
    }
    if (!opt.x_label.empty()) {
        std::snprintf(buf, sizeof buf,
                      "<text x='%g' y='%g' font-size='12' text-anchor='middle'>%s</text>\n",
                      0.5 * (f.px0 + f.px1), f.py1 + 34, esc(opt.x_label).c_str());
        out += buf;
    }
    if (!opt.y_label.empty()) {
        std::snprintf(buf, sizeof buf,
                      "<text x='14' y='%g' font-size='12' text-anchor='middle' "
                      "transform='rotate(-90 14 %g)'>%s</text>\n",
                      0.5 * (f.py0 + f.py1), 0.5 * (f.py0 + f.py1), esc(opt.y_label).c_str());
        out += buf;
    }
}

// Sign-coloured fill between the polyline and y=0, split at zero crossings.
inline void sign_fill(std::string& out, const Frame& f, const Series& s) {
    if (s.x.size() < 2) return;
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < s.x.size(); ++i) {
        if (i > 0 && (s.y[i - 1] < 0) != (s.y[i] < 0) && s.y[i] != s.y[i - 1]) {
            const double r = s.y[i - 1] / (s.y[i - 1] - s.y[i]);
            pts.emplace_back(s.x[i - 1] + r * (s.x[i] - s.x[i - 1]), 0.0);
        }
        pts.emplace_back(s.x[i], s.y[i]);
    }
    size_t start = 0;
    while (start + 1 < pts.size()) {
        size_t end = start + 1;
        const bool neg = pts[start].second < 0 || (pts[start].second == 0 && pts[end].second < 0);
        while (end < pts.size() && ((pts[end].second < 0) == neg || pts[end].second == 0)) ++end;
        std::string poly;
        for (size_t i = start; i < end; ++i)
            poly += num(f.sx(pts[i].first)) + "," + num(f.sy(pts[i].second)) + " ";
        poly += num(f.sx(pts[end - 1].first)) + "," + num(f.sy(0.0)) + " ";
        poly += num(f.sx(pts[start].first)) + "," + num(f.sy(0.0));
        out += "<polygon points='" + poly + "' fill='" + (neg ? "#d62728" : "#2ca02c") +
               "' opacity='0.3' stroke='none'/>\n";
        start = end - 1;
    }
}

}  // namespace detail

inline std::string line_plot(const std::vector<Series>& series, const PlotOptions& opt) {
    if (series.empty()) throw ConfigError("svg: no series");
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const Series& s : series) {
        if (s.x.size() != s.y.size() || s.x.empty()) throw ConfigError("svg: bad series");
        for (size_t i = 0; i < s.x.size(); ++i) {
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (opt.shade_sign) {
        y0 = std::min(y0, 0.0);
        y1 = std::max(y1, 0.0);
    }
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) y1 = y0 + 1.0;
    const double pad = 0.05 * (y1 - y0);
    detail::Frame f{x0, x1, y0 - pad, y1 + pad, 56.0, opt.width - 16.0, 32.0, opt.height - 44.0};
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns='http://www.w3.org/2000/svg' width='%d' height='%d' "
                  "viewBox='0 0 %d %d'>\n<rect width='%d' height='%d' fill='white'/>\n",
                  opt.width, opt.height, opt.width, opt.height, opt.width, opt.height);
    out += buf;
    detail::axes(out, f, opt);
    if (opt.shade_sign) detail::sign_fill(out, f, series[0]);
    if (f.y0 < 0.0 && f.y1 > 0.0) {
        std::snprintf(buf, sizeof buf, "<line x1='%g' y1='%g' x2='%g' y2='%g' stroke='#888'/>\n",
                      f.px0, f.sy(0.0), f.px1, f.sy(0.0));
        out += buf;
    }
    for (const Series& s : series) {
        std::string pts;
        for (size_t i = 0; i < s.x.size(); ++i)
            pts += detail::num(f.sx(s.x[i])) + "," + detail::num(f.sy(s.y[i])) + " ";
        out += "<polyline points='" + pts + "' fill='none' stroke='" + s.color +
               "' stroke-width='1.8'/>\n";
    }
    double ly = f.py0 + 14;
    for (const Series& s : series) {
        if (s.name.empty()) continue;
        std::snprintf(buf, sizeof buf,
                      "<line x1='%g' y1='%g' x2='%g' y2='%g' stroke='%s' stroke-width='2'/>\n"
                      "<text x='%g' y='%g' font-size='11'>%s</text>\n",
                      f.px1 - 150.0, ly, f.px1 - 130.0, ly, s.color.c_str(), f.px1 - 124.0, ly + 4,
                      detail::esc(s.name).c_str());
        out += buf;
        ly += 16;
    }
    out += "</svg>\n";
    return out;
}

inline std::string bar_chart(const std::vector<std::string>& labels,
                             const std::vector<double>& values, const PlotOptions& opt) {
    if (labels.empty() || labels.size() != values.size()) throw ConfigError("svg: bad bar data");
    double y0 = 0.0, y1 = 0.0;
    for (double v : values) {
        y0 = std::min(y0, v);
        y1 = std::max(y1, v);
    }
    if (y1 <= y0) y1 = y0 + 1.0;
    detail::Frame f{0.0, static_cast<double>(labels.size()), y0, y1 * 1.05, 56.0,
                    opt.width - 16.0, 32.0, opt.height - 60.0};
    char buf[512];
    std::string out;
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns='http://www.w3.org/2000/svg' width='%d' height='%d' "
                  "viewBox='0 0 %d %d'>\n<rect width='%d' height='%d' fill='white'/>\n",
                  opt.width, opt.height, opt.width, opt.height, opt.width, opt.height);
    out += buf;
    PlotOptions axis_opt = opt;
    axis_opt.x_label.clear();
    detail::axes(out, f, axis_opt);
    const double bw = (f.px1 - f.px0) / labels.size();
    for (size_t i = 0; i < labels.size(); ++i) {
        const double top = f.sy(std::max(values[i], 0.0));
        const double bot = f.sy(std::min(values[i], 0.0));
        std::snprintf(buf, sizeof buf,
                      "<rect x='%g' y='%g' width='%g' height='%g' fill='#1f77b4' opacity='0.8'/>\n"
                      "<text x='%g' y='%g' font-size='10' text-anchor='middle'>%s</text>\n",
                      f.px0 + i * bw + bw * 0.15, top, bw * 0.7, std::max(bot - top, 0.5),
                      f.px0 + (i + 0.5) * bw, f.py1 + 30.0, detail::esc(labels[i]).c_str());
        out += buf;
    }
    out += "</svg>\n";
    return out;
}

}  // namespace flowdn::svg
