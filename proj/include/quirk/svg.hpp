#pragma once

// Minimal SVG line/scatter plots: axes, polylines and point markers.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "quirk/errors.hpp"

namespace quirk {

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out += c;
        }
    }
    return out;
}

struct SvgSeries {
    std::string name;
    std::vector<double> xs;
    std::vector<double> ys;
    std::string color = "#1f77b4";
    bool points = false; ///< markers instead of a polyline
};

class SvgPlot {
public:
    explicit SvgPlot(std::string title, std::string x_label = "x", std::string y_label = "y")
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

    void add(SvgSeries series) {
        if (series.xs.size() != series.ys.size()) throw ShapeError("svg series '" + series.name + "': xs and ys differ");
        series_.push_back(std::move(series));
    }

    std::string render(int width = 640, int height = 420) const {
        const double left = 60, right = 150, top = 40, bottom = 50;
        double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
        for (const auto& s : series_)
            for (std::size_t i = 0; i < s.xs.size(); ++i) {
                if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
                x0 = std::min(x0, s.xs[i]);
                x1 = std::max(x1, s.xs[i]);
                y0 = std::min(y0, s.ys[i]);
                y1 = std::max(y1, s.ys[i]);
            }
        if (!(x0 <= x1)) x0 = 0, x1 = 1;
        if (!(y0 <= y1)) y0 = 0, y1 = 1;
        if (x0 == x1) x0 -= 0.5, x1 += 0.5;
        if (y0 == y1) y0 -= 0.5, y1 += 0.5;
        const double pw = width - left - right, ph = height - top - bottom;
        auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
        auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

        std::ostringstream o;
        o.precision(6);
        o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
          << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
        o << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
        o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
          << xml_escape(title_) << "</text>\n";
        o << "<g stroke=\"black\" stroke-width=\"1\">\n";
        o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\"/>\n";
        o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n";
        o << "</g>\n";
        o << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
        for (int k = 0; k <= 4; ++k) {
            const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
            o << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << xv << "</text>\n";
            o << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
        }
        o << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">" << xml_escape(x_label_)
          << "</text>\n";
        o << "<text x=\"14\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 14 " << top + ph / 2
          << ")\" text-anchor=\"middle\">" << xml_escape(y_label_) << "</text>\n";
        o << "</g>\n";

        for (std::size_t s = 0; s < series_.size(); ++s) {
            const auto& ser = series_[s];
            if (ser.points) {
                o << "<g fill=\"" << xml_escape(ser.color) << "\">\n";
                for (std::size_t i = 0; i < ser.xs.size(); ++i)
                    if (std::isfinite(ser.xs[i]) && std::isfinite(ser.ys[i]))
                        o << "<circle cx=\"" << px(ser.xs[i]) << "\" cy=\"" << py(ser.ys[i]) << "\" r=\"1.8\"/>\n";
                o << "</g>\n";
            } else {
                o << "<polyline fill=\"none\" stroke=\"" << xml_escape(ser.color) << "\" stroke-width=\"1.5\" points=\"";
                for (std::size_t i = 0; i < ser.xs.size(); ++i)
                    if (std::isfinite(ser.xs[i]) && std::isfinite(ser.ys[i]))
                        o << px(ser.xs[i]) << ',' << py(ser.ys[i]) << ' ';
                o << "\"/>\n";
            }
            const double ly = top + 14 + 18.0 * static_cast<double>(s);
            o << "<rect x=\"" << left + pw + 12 << "\" y=\"" << ly - 8 << "\" width=\"12\" height=\"8\" fill=\""
              << xml_escape(ser.color) << "\"/>\n";
            o << "<text x=\"" << left + pw + 30 << "\" y=\"" << ly << "\" font-family=\"sans-serif\" font-size=\"11\">"
              << xml_escape(ser.name) << "</text>\n";
        }
        o << "</svg>\n";
        return o.str();
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot open '" + path + "' for writing");
        out << render();
        if (!out) throw IoError("failed writing '" + path + "'");
    }

private:
    std::string title_, x_label_, y_label_;
    std::vector<SvgSeries> series_;
};

inline const std::vector<std::string>& svg_palette() {
    static const std::vector<std::string> p{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    return p;
}

} // namespace quirk
