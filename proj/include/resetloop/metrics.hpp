#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "plant.hpp"
#include "simulate.hpp"

namespace resetloop {

struct ErrorMetrics {
    double rms     = 0.0;
    double max_abs = 0.0;
};

struct StepMetrics {
    double overshoot_pct = 0.0;
    double settling_time = 0.0;  // s, 2% band
    double final_value   = 0.0;
};

/// One-sided power spectral density (units^2/Hz).
struct Spectrum {
    std::vector<double> freq_hz;
    std::vector<double> psd;
};

/// Running integral of a PSD; the last entry approximates the signal variance.
struct CumulativeSpectrum {
    std::vector<double> freq_hz;
    std::vector<double> cumulative_power;
};

namespace metrics {

inline constexpr std::size_t kDefaultSegment = 1u << 14;

[[nodiscard]] inline ErrorMetrics rms_max(std::span<const double> x) {
    if (x.empty()) throw MetricsError("rms_max: empty window");
    double ss = 0.0, mx = 0.0;
    for (double v : x) {
        ss += v * v;
        mx = std::max(mx, std::abs(v));
    }
    return {std::sqrt(ss / static_cast<double>(x.size())), mx};
}

/// RMS and peak of the error after the transient window.
[[nodiscard]] inline ErrorMetrics rms_max(const SimTrace& tr) {
    const auto first = tr.first_metric_sample();
    if (first >= tr.e.size()) throw MetricsError("rms_max: transient discard covers the whole trace");
    return rms_max(std::span<const double>(tr.e).subspan(first));
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace detail

/**
 * Welch estimate: Hann window, 50% overlap, per-segment mean removal,
 * one-sided scaling so that sum(psd) * df equals the mean square.
 */
[[nodiscard]] inline Spectrum welch_psd(std::span<const double> x, double fs, std::size_t segment = kDefaultSegment) {
    if (!(fs > 0.0)) throw MetricsError("welch_psd: fs must be > 0");
    if (segment < 8) throw MetricsError("welch_psd: segment too short");
    if (x.size() < 2 * segment) throw MetricsError("welch_psd: signal shorter than two segments");

    const std::size_t hop   = segment / 2;
    const std::size_t nseg  = (x.size() - segment) / hop + 1;
    const std::size_t nbins = segment / 2 + 1;

    std::vector<double> w(segment);
    double wss = 0.0;
    for (std::size_t i = 0; i < segment; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(segment));
        wss += w[i] * w[i];
    }

    double* in         = fftw_alloc_real(segment);
    fftw_complex* outc = fftw_alloc_complex(nbins);
    fftw_plan plan;
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(segment), in, outc, FFTW_ESTIMATE);
    }

    std::vector<double> acc(nbins, 0.0);
    for (std::size_t s = 0; s < nseg; ++s) {
        const auto seg = x.subspan(s * hop, segment);
        double mean    = 0.0;
        for (double v : seg) mean += v;
        mean /= static_cast<double>(segment);
        for (std::size_t i = 0; i < segment; ++i) in[i] = (seg[i] - mean) * w[i];
        fftw_execute(plan);
        for (std::size_t b = 0; b < nbins; ++b) acc[b] += outc[b][0] * outc[b][0] + outc[b][1] * outc[b][1];
    }
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(outc);

    Spectrum sp;
    sp.freq_hz.resize(nbins);
    sp.psd.resize(nbins);
    const double scale = 1.0 / (fs * wss * static_cast<double>(nseg));
    for (std::size_t b = 0; b < nbins; ++b) {
        sp.freq_hz[b] = fs * static_cast<double>(b) / static_cast<double>(segment);
        const bool edge = b == 0 || (segment % 2 == 0 && b == nbins - 1);
        sp.psd[b]       = acc[b] * scale * (edge ? 1.0 : 2.0);
    }
    return sp;
}

/// Trapezoidal running integral of a PSD over frequency.
[[nodiscard]] inline CumulativeSpectrum cumulate(const Spectrum& sp) {
    CumulativeSpectrum c;
    c.freq_hz = sp.freq_hz;
    c.cumulative_power.assign(sp.psd.size(), 0.0);
    for (std::size_t i = 1; i < sp.psd.size(); ++i)
        c.cumulative_power[i] = c.cumulative_power[i - 1] +
                                0.5 * (sp.psd[i - 1] + sp.psd[i]) * (sp.freq_hz[i] - sp.freq_hz[i - 1]);
    return c;
}

[[nodiscard]] inline CumulativeSpectrum cpsd(std::span<const double> x, double fs,
                                             std::size_t segment = kDefaultSegment) {
    return cumulate(welch_psd(x, fs, segment));
}

/// Cumulative PSD of the error after the transient window.
[[nodiscard]] inline CumulativeSpectrum cpsd(const SimTrace& tr, std::size_t segment = kDefaultSegment) {
    const auto first = tr.first_metric_sample();
    if (first >= tr.e.size()) throw MetricsError("cpsd: transient discard covers the whole trace");
    return cpsd(std::span<const double>(tr.e).subspan(first), tr.fs, segment);
}

/**
 * Overshoot relative to the final value (mean of the last 10% of samples)
 * and the time at which y enters the 2% band for good.
 */
[[nodiscard]] inline StepMetrics step_metrics(std::span<const double> t, std::span<const double> y) {
    if (t.size() != y.size() || y.size() < 10) throw MetricsError("step_metrics: need at least 10 paired samples");
    const std::size_t tail = std::max<std::size_t>(1, y.size() / 10);
    double final_value     = 0.0;
    for (std::size_t i = y.size() - tail; i < y.size(); ++i) final_value += y[i];
    final_value /= static_cast<double>(tail);
    double peak_abs = 0.0;
    for (double v : y) peak_abs = std::max(peak_abs, std::abs(v));
    if (final_value == 0.0 || std::abs(final_value) < 1e-12 * peak_abs)
        throw MetricsError("step_metrics: final value is zero");

    const double sgn = final_value > 0.0 ? 1.0 : -1.0;
    double peak      = -std::numeric_limits<double>::infinity();
    for (double v : y) peak = std::max(peak, sgn * v);
    StepMetrics m;
    m.final_value   = final_value;
    m.overshoot_pct = std::max(0.0, (peak - std::abs(final_value)) / std::abs(final_value) * 100.0);
    const double band = 0.02 * std::abs(final_value);
    std::size_t last  = y.size();
    for (std::size_t i = y.size(); i-- > 0;) {
        if (std::abs(y[i] - final_value) > band) {
            last = i;
            break;
        }
    }
    if (last == y.size())
        m.settling_time = t.front();
    else
        m.settling_time = last + 1 < t.size() ? t[last + 1] : t[last];
    return m;
}

[[nodiscard]] inline StepMetrics step_metrics(const SimTrace& tr) { return step_metrics(tr.t, tr.y); }

struct MetricsRow {
    std::string controller;
    std::string scenario;
    double freq_hz = 0.0;
    ErrorMetrics m;
};

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << "controller,scenario,freq_hz,rms,max_abs\n";
    for (const auto& r : rows)
        out << r.controller << ',' << r.scenario << ',' << plant::detail::format_double(r.freq_hz) << ','
            << plant::detail::format_double(r.m.rms) << ',' << plant::detail::format_double(r.m.max_abs) << '\n';
}

inline void write_cpsd_csv(std::ostream& out, const CumulativeSpectrum& c) {
    out << "freq_hz,cumulative_power\n";
    for (std::size_t i = 0; i < c.freq_hz.size(); ++i)
        out << plant::detail::format_double(c.freq_hz[i]) << ',' << plant::detail::format_double(c.cumulative_power[i])
            << '\n';
}

}  // namespace metrics
}  // namespace resetloop
