#pragma once

#include <charconv>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "lti.hpp"
#include "numerics.hpp"

namespace resetloop {

enum class PlantForm { pure_mass, mass_spring_damper, fitted };

[[nodiscard]] constexpr std::string_view to_string(PlantForm f) {
    switch (f) {
        case PlantForm::pure_mass: return "pure_mass";
        case PlantForm::mass_spring_damper: return "mass_spring_damper";
        case PlantForm::fitted: return "fitted";
    }
    return "?";
}

/**
 * gain / (m s^2 + c s + k), optionally preceded by a first-order actuator
 * lag p/(s + p) (voltage-driven voice coil: p = R/L).
 */
struct PlantModel {
    PlantForm form       = PlantForm::mass_spring_damper;
    double m             = 1.0;  // kg
    double c             = 0.0;  // N s/m
    double k             = 0.0;  // N/m
    double gain          = 1.0;
    double actuator_pole = 0.0;  // rad/s, 0 = none

    void validate() const {
        if (!(m > 0.0) || !std::isfinite(m)) throw ParameterError("PlantModel: m must be > 0");
        if (!(c >= 0.0) || !std::isfinite(c)) throw ParameterError("PlantModel: c must be >= 0");
        if (!(k >= 0.0) || !std::isfinite(k)) throw ParameterError("PlantModel: k must be >= 0");
        if (!std::isfinite(gain) || gain == 0.0) throw ParameterError("PlantModel: gain must be finite and non-zero");
        if (!(actuator_pole >= 0.0) || !std::isfinite(actuator_pole))
            throw ParameterError("PlantModel: actuator_pole must be >= 0");
    }

    /// Mechanical part only.
    [[nodiscard]] StateSpace mechanics() const {
        validate();
        return lti::tf_to_ss({{gain}, {m, c, k}}, "mech");
    }

    [[nodiscard]] StateSpace state_space() const {
        auto mech = mechanics();
        if (actuator_pole == 0.0) return mech;
        const auto act = lti::tf_to_ss({{actuator_pole}, {1.0, actuator_pole}}, "act");
        return lti::series(act, mech);
    }
};

struct FrfRecord {
    double freq_hz   = 0.0;
    double mag_db    = 0.0;
    double phase_deg = 0.0;

    [[nodiscard]] Complex value() const {
        return std::polar(std::pow(10.0, mag_db / 20.0), phase_deg * std::numbers::pi / 180.0);
    }
};

struct FrfData {
    std::vector<FrfRecord> records;
    std::vector<std::string> warnings;
};

struct PlantFit {
    PlantModel model;
    double residual = 0.0;  // relative RMS over complex samples
    std::vector<std::string> warnings;
};

namespace plant {

inline constexpr std::string_view kFrfHeader = "freq_hz,mag_db,phase_deg";
inline constexpr double kFitWarnResidual     = 0.1;

/// Flexure-guided 1 kg stage: 8 Hz suspension mode, zeta = 0.02, 1925 rad/s coil pole.
[[nodiscard]] inline PlantModel default_stage() {
    constexpr double zeta = 0.02;
    const double wn       = 2.0 * std::numbers::pi * 8.0;
    PlantModel p;
    p.form          = PlantForm::mass_spring_damper;
    p.m             = 1.0;
    p.k             = p.m * wn * wn;
    p.c             = 2.0 * zeta * std::sqrt(p.k * p.m);
    p.gain          = 1.0;
    p.actuator_pole = 1925.0;
    return p;
}

namespace detail {

inline std::string_view trim_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

inline double parse_field(std::string_view s, std::size_t line, const char* name) {
    double v        = 0.0;
    const auto* beg = s.data();
    const auto* end = s.data() + s.size();
    if (!s.empty() && *beg == '+') ++beg;
    auto [ptr, ec] = std::from_chars(beg, end, v);
    if (ec != std::errc() || ptr != end || s.empty())
        throw ParseError("FRF: cannot parse " + std::string(name) + " '" + std::string(s) + "'", line);
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Parses the FRF CSV format (header `freq_hz,mag_db,phase_deg`, LF or CRLF).
[[nodiscard]] inline FrfData parse_frf(std::istream& in) {
    FrfData out;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen    = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = detail::trim_cr(line);
        if (line_no == 1 && sv.size() >= 3 && sv.substr(0, 3) == "\xEF\xBB\xBF") sv.remove_prefix(3);
        if (!header_seen) {
            if (sv != kFrfHeader) throw ParseError("FRF: expected header '" + std::string(kFrfHeader) + "'", line_no);
            header_seen = true;
            continue;
        }
        if (sv.empty()) continue;
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            const auto pos = sv.find(',', start);
            fields.push_back(sv.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
        if (fields.size() != 3) throw ParseError("FRF: expected 3 fields", line_no);
        FrfRecord r{detail::parse_field(fields[0], line_no, "freq_hz"), detail::parse_field(fields[1], line_no, "mag_db"),
                    detail::parse_field(fields[2], line_no, "phase_deg")};
        if (!std::isfinite(r.freq_hz) || !std::isfinite(r.mag_db) || !std::isfinite(r.phase_deg))
            throw ValidationError("FRF: non-finite value on line " + std::to_string(line_no));
        if (!out.records.empty() && !(r.freq_hz > out.records.back().freq_hz))
            throw ValidationError("FRF: frequencies must be strictly increasing (line " + std::to_string(line_no) + ")");
        out.records.push_back(r);
    }
    if (out.records.empty()) out.warnings.emplace_back("FRF: file contains no records");
    return out;
}

[[nodiscard]] inline FrfData load_frf(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_frf: cannot open '" + path + "'");
    return parse_frf(in);
}

inline void write_frf(std::ostream& out, const std::vector<FrfRecord>& records) {
    out << kFrfHeader << '\n';
    for (const auto& r : records)
        out << detail::format_double(r.freq_hz) << ',' << detail::format_double(r.mag_db) << ','
            << detail::format_double(r.phase_deg) << '\n';
}

/// Samples a StateSpace at the given frequencies (Hz) as FRF records.
[[nodiscard]] inline std::vector<FrfRecord> sample_frf(const StateSpace& sys, const std::vector<double>& freqs_hz) {
    std::vector<FrfRecord> out;
    out.reserve(freqs_hz.size());
    for (double f : freqs_hz) {
        const Complex h = lti::freq_response(sys, 2.0 * std::numbers::pi * f);
        out.push_back({f, 20.0 * std::log10(std::abs(h)), std::arg(h) * 180.0 / std::numbers::pi});
    }
    return out;
}

/**
 * Least-squares fit of 1/(m s^2 + c s + k) (gain fixed to 1) to FRF samples,
 * uniform weights on the complex residual. A linearised equation-error solve
 * seeds a damped Gauss-Newton refinement.
 */
[[nodiscard]] inline PlantFit fit_second_order(const std::vector<FrfRecord>& frf) {
    if (frf.size() < 10) throw FitError("fit_second_order: need at least 10 FRF records");
    if (!(frf.back().freq_hz >= 10.0 * frf.front().freq_hz))
        throw FitError("fit_second_order: FRF must span at least one decade");

    const auto n = static_cast<Eigen::Index>(frf.size());
    std::vector<Complex> h(frf.size()), s(frf.size());
    for (std::size_t i = 0; i < frf.size(); ++i) {
        h[i] = frf[i].value();
        s[i] = Complex(0.0, 2.0 * std::numbers::pi * frf[i].freq_hz);
    }

    // Equation error: H (a s^2 + b s + c) = 1.
    Matrix lhs(2 * n, 3);
    Vector rhs(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto si = s[static_cast<std::size_t>(i)], hi = h[static_cast<std::size_t>(i)];
        const Complex r0 = hi * si * si, r1 = hi * si, r2 = hi;
        // Normalise each row pair by |H| so that both ends of the band contribute.
        const double w  = 1.0 / std::abs(hi);
        lhs.row(2 * i) << w * r0.real(), w * r1.real(), w * r2.real();
        lhs.row(2 * i + 1) << w * r0.imag(), w * r1.imag(), w * r2.imag();
        rhs(2 * i)     = w;
        rhs(2 * i + 1) = 0.0;
    }
    // Column scaling keeps the s^2 and s^0 columns comparable.
    Vector col_scale = lhs.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < 3; ++j)
        if (col_scale(j) == 0.0) throw FitError("fit_second_order: rank-deficient regression");
    Matrix scaled = lhs * col_scale.cwiseInverse().asDiagonal();
    Eigen::ColPivHouseholderQR<Matrix> qr(scaled);
    qr.setThreshold(1e-12);
    if (qr.rank() < 3) throw FitError("fit_second_order: rank-deficient regression");
    Vector p = qr.solve(rhs).cwiseQuotient(col_scale);

    // Output error refinement in parameters relative to the seed.
    const Vector p0 = p.cwiseAbs().cwiseMax(1e-300);
    auto residuals  = [&](const Vector& q, Vector& r, Matrix* jac) {
        r.resize(2 * n);
        if (jac) jac->resize(2 * n, 3);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto si    = s[static_cast<std::size_t>(i)];
            const Complex dn = q(0) * si * si + q(1) * si + q(2);
            const Complex e  = h[static_cast<std::size_t>(i)] - 1.0 / dn;
            r(2 * i)         = e.real();
            r(2 * i + 1)     = e.imag();
            if (jac) {
                const Complex g  = 1.0 / (dn * dn);  // d(-1/dn)/d dn = 1/dn^2
                const Complex d0 = g * si * si * p0(0), d1 = g * si * p0(1), d2 = g * p0(2);
                jac->row(2 * i) << d0.real(), d1.real(), d2.real();
                jac->row(2 * i + 1) << d0.imag(), d1.imag(), d2.imag();
            }
        }
    };
    Vector r, r_try;
    Matrix jac;
    residuals(p, r, &jac);
    double cost   = r.squaredNorm();
    double lambda = 1e-3;
    for (int it = 0; it < 200; ++it) {
        const Matrix jtj = jac.transpose() * jac;
        const Vector g   = jac.transpose() * r;
        Matrix damped    = jtj;
        damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
        const Vector step   = -damped.ldlt().solve(g);
        const Vector p_try  = p + step.cwiseProduct(p0);
        residuals(p_try, r_try, nullptr);
        const double c_try = r_try.squaredNorm();
        if (std::isfinite(c_try) && c_try < cost) {
            const double rel = (cost - c_try) / std::max(cost, 1e-300);
            p                = p_try;
            cost             = c_try;
            residuals(p, r, &jac);
            lambda = std::max(lambda / 3.0, 1e-12);
            if (rel < 1e-15) break;
        } else {
            lambda *= 4.0;
            if (lambda > 1e12) break;
        }
    }

    PlantFit fit;
    if (!(p(0) > 0.0)) throw FitError("fit_second_order: fitted mass is not positive");
    fit.model.form = PlantForm::fitted;
    fit.model.m    = p(0);
    fit.model.c    = p(1);
    fit.model.k    = p(2);
    fit.model.gain = 1.0;
    if (fit.model.c < 0.0) {
        fit.warnings.emplace_back("fit_second_order: negative damping clamped to 0");
        fit.model.c = 0.0;
    }
    if (fit.model.k < 0.0) {
        fit.warnings.emplace_back("fit_second_order: negative stiffness clamped to 0");
        fit.model.k = 0.0;
    }
    double num = 0.0, den = 0.0;
    const auto ss = fit.model.state_space();
    for (std::size_t i = 0; i < frf.size(); ++i) {
        num += std::norm(h[i] - lti::freq_response(ss, s[i].imag()));
        den += std::norm(h[i]);
    }
    fit.residual = std::sqrt(num / den);
    if (fit.residual > kFitWarnResidual) {
        std::ostringstream os;
        os << "fit_second_order: relative residual " << fit.residual << " exceeds " << kFitWarnResidual
           << "; data is not well described by a second-order model";
        fit.warnings.push_back(os.str());
    }
    return fit;
}

}  // namespace plant
}  // namespace resetloop
