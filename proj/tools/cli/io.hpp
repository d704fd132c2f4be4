#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <resetloop/errors.hpp>

namespace resetloop::cli {

namespace fs = std::filesystem;

/// Writes through a sibling temp file and renames it into place.
inline void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
        body(out);
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw Error("write failed for '" + path.string() + "'");
        }
    }
    fs::rename(tmp, path);
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// One line of an SVG plot.
struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct Panel {
    std::string y_label;
    std::vector<Series> series;
};

namespace detail {

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                   "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"};
    return colors[i % 10];
}

inline std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

}  // namespace detail

/// Stacked panels sharing the x axis. Non-finite points break the polyline.
inline void write_svg(std::ostream& out, const std::string& title, const std::string& x_label, bool log_x,
                      const std::vector<Panel>& panels) {
    const double width = 820, panel_h = 260, left = 80, right = 170, top = 40, gap = 50;
    const double height = top + static_cast<double>(panels.size()) * (panel_h + gap) + 10;
    const double pw     = width - left - right;

    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    auto tx     = [&](double x) { return log_x ? std::log10(x) : x; };
    for (const auto& p : panels)
        for (const auto& s : p.series)
            for (double x : s.x)
                if (std::isfinite(tx(x))) {
                    x_lo = std::min(x_lo, tx(x));
                    x_hi = std::max(x_hi, tx(x));
                }
    if (!(x_hi > x_lo)) {
        x_lo = 0;
        x_hi = 1;
    }

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << left << "\" y=\"22\" font-size=\"14\">" << detail::escape(title) << "</text>\n";

    for (std::size_t pi = 0; pi < panels.size(); ++pi) {
        const auto& p    = panels[pi];
        const double y0  = top + static_cast<double>(pi) * (panel_h + gap);
        double y_lo      = std::numeric_limits<double>::infinity(), y_hi = -y_lo;
        for (const auto& s : p.series)
            for (double y : s.y)
                if (std::isfinite(y)) {
                    y_lo = std::min(y_lo, y);
                    y_hi = std::max(y_hi, y);
                }
        if (!(y_hi > y_lo)) {
            y_lo = (std::isfinite(y_lo) ? y_lo : 0.0) - 1.0;
            y_hi = y_lo + 2.0;
        }
        auto px = [&](double x) { return left + (tx(x) - x_lo) / (x_hi - x_lo) * pw; };
        auto py = [&](double y) { return y0 + panel_h - (y - y_lo) / (y_hi - y_lo) * panel_h; };

        out << "<rect x=\"" << left << "\" y=\"" << y0 << "\" width=\"" << pw << "\" height=\"" << panel_h
            << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double yv = y_lo + (y_hi - y_lo) * i / 4.0;
            out << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << std::setprecision(4)
                << yv << "</text>\n";
        }
        if (log_x) {
            for (int dec = static_cast<int>(std::ceil(x_lo)); dec <= static_cast<int>(std::floor(x_hi)); ++dec) {
                const double xv = left + (dec - x_lo) / (x_hi - x_lo) * pw;
                out << "<line x1=\"" << xv << "\" y1=\"" << y0 << "\" x2=\"" << xv << "\" y2=\"" << y0 + panel_h
                    << "\" stroke=\"#ddd\"/>\n";
                out << "<text x=\"" << xv << "\" y=\"" << y0 + panel_h + 14 << "\" text-anchor=\"middle\">1e" << dec
                    << "</text>\n";
            }
        } else {
            for (int i = 0; i <= 4; ++i) {
                const double xv = x_lo + (x_hi - x_lo) * i / 4.0;
                out << "<text x=\"" << left + pw * i / 4.0 << "\" y=\"" << y0 + panel_h + 14
                    << "\" text-anchor=\"middle\">" << std::setprecision(4) << xv << "</text>\n";
            }
        }
        out << "<text x=\"14\" y=\"" << y0 + panel_h / 2 << "\" transform=\"rotate(-90 14 " << y0 + panel_h / 2
            << ")\" text-anchor=\"middle\">" << detail::escape(p.y_label) << "</text>\n";

        for (std::size_t si = 0; si < p.series.size(); ++si) {
            const auto& s = p.series[si];
            std::ostringstream pts;
            auto flush = [&] {
                if (!pts.str().empty())
                    out << "<polyline fill=\"none\" stroke-width=\"1.3\" stroke=\"" << detail::palette(si)
                        << "\" points=\"" << pts.str() << "\"/>\n";
                pts.str("");
            };
            for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
                if (!std::isfinite(s.y[i]) || !std::isfinite(tx(s.x[i]))) {
                    flush();
                    continue;
                }
                pts << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
            }
            flush();
            if (pi == 0)
                out << "<text x=\"" << left + pw + 10 << "\" y=\"" << y0 + 14 + 14.0 * static_cast<double>(si)
                    << "\" fill=\"" << detail::palette(si) << "\">" << detail::escape(s.label) << "</text>\n";
        }
    }
    const double xl_y = top + static_cast<double>(panels.size()) * (panel_h + gap) - gap + 32;
    out << "<text x=\"" << left + pw / 2 << "\" y=\"" << xl_y << "\" text-anchor=\"middle\">" << detail::escape(x_label)
        << "</text>\n";
    out << "</svg>\n";
}

}  // namespace resetloop::cli
