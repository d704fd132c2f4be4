#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "harmonics.hpp"
#include "lti.hpp"
#include "reset_system.hpp"

namespace resetloop {

enum class ControllerKind { PID, PI2D, PICID, C_IbLPF, C_IbHPF, C_LPF, C_HPF, CGLP_PI2D, custom };

inline constexpr std::array<ControllerKind, 8> kNamedControllers{
    ControllerKind::PID,   ControllerKind::PI2D,  ControllerKind::PICID, ControllerKind::C_IbLPF,
    ControllerKind::C_IbHPF, ControllerKind::C_LPF, ControllerKind::C_HPF, ControllerKind::CGLP_PI2D};

[[nodiscard]] constexpr std::string_view to_string(ControllerKind k) {
    switch (k) {
        case ControllerKind::PID: return "PID";
        case ControllerKind::PI2D: return "PI2D";
        case ControllerKind::PICID: return "PICID";
        case ControllerKind::C_IbLPF: return "C_IbLPF";
        case ControllerKind::C_IbHPF: return "C_IbHPF";
        case ControllerKind::C_LPF: return "C_LPF";
        case ControllerKind::C_HPF: return "C_HPF";
        case ControllerKind::CGLP_PI2D: return "CGLP_PI2D";
        case ControllerKind::custom: return "custom";
    }
    return "?";
}

[[nodiscard]] inline std::string valid_controller_names() {
    std::string s;
    for (auto k : kNamedControllers) {
        s += std::string(to_string(k)) + ", ";
    }
    return s + "custom";
}

[[nodiscard]] inline ControllerKind parse_controller_kind(std::string_view s) {
    for (auto k : kNamedControllers)
        if (s == to_string(k)) return k;
    if (s == "custom") return ControllerKind::custom;
    throw SpecError("unknown controller '" + std::string(s) + "'; valid names: " + valid_controller_names());
}

enum class SecondIntegrator { none, linear, reset };

/// Controller configuration. Frequencies in rad/s. Defaults reproduce the reference PID design.
struct ControllerSpec {
    ControllerKind name = ControllerKind::PID;
    double k_p          = 3.49;
    double w_i          = 94.28;
    double w_d          = 188.57;
    double w_t          = 4714.0;
    double w_f          = 9428.0;
    double w_i2         = 2.0 * std::numbers::pi * 30.0;
    double w_bp         = 2.0 * std::numbers::pi * 0.01;
    // CgLp corners; designed from cglp_lead at w_c when absent.
    std::optional<double> w_r;
    std::optional<double> w_ra;
    double w_f_cglp  = 20000.0;
    double alpha     = 1.2;
    double cglp_lead = 11.0;    // degrees
    double w_c       = 942.48;  // rad/s, design crossover
    // Only meaningful for name == custom.
    SecondIntegrator second_integrator = SecondIntegrator::linear;
    bool cglp                          = false;

    static ControllerSpec preset(ControllerKind k) {
        ControllerSpec s;
        s.name = k;
        return s;
    }
};

struct CglpDesign {
    double w_r           = std::numeric_limits<double>::infinity();
    double w_ra          = std::numeric_limits<double>::infinity();
    bool pass_through    = false;
    double phase_deg     = 0.0;  // achieved DF phase at w_c
    double min_gain_db   = 0.0;  // over [w_c/10, w_c]
    double max_gain_db   = 0.0;
};

struct MarginReport {
    double margin_deg = 0.0;
    double crossover  = 0.0;  // rad/s
};

namespace controllers {

inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

namespace detail {

inline void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw SpecError(std::string("controller spec: ") + name + " must be > 0");
}

inline bool uses_cglp(const ControllerSpec& s) {
    return s.name == ControllerKind::CGLP_PI2D || (s.name == ControllerKind::custom && s.cglp);
}

inline void validate(const ControllerSpec& s) {
    require_positive(s.w_i, "w_i");
    require_positive(s.w_d, "w_d");
    require_positive(s.w_t, "w_t");
    require_positive(s.w_f, "w_f");
    require_positive(s.w_i2, "w_i2");
    require_positive(s.w_bp, "w_bp");
    require_positive(s.w_f_cglp, "w_f_cglp");
    require_positive(s.alpha, "alpha");
    require_positive(s.w_c, "w_c");
    if (!std::isfinite(s.k_p) || s.k_p == 0.0) throw SpecError("controller spec: k_p must be finite and non-zero");
    if (!(s.w_d < s.w_t && s.w_t < s.w_f)) throw SpecError("controller spec: need w_d < w_t < w_f");
    if (s.w_r) require_positive(*s.w_r, "w_r");
    if (s.w_ra) require_positive(*s.w_ra, "w_ra");
    if ((s.w_r || s.w_ra) && !uses_cglp(s))
        throw SpecError("controller spec: w_r/w_ra given but " + std::string(to_string(s.name)) + " has no CgLp");
    if (s.w_ra && !s.w_r) throw SpecError("controller spec: w_ra given without w_r");
    if (s.name != ControllerKind::custom && (s.cglp || s.second_integrator != SecondIntegrator::linear))
        throw SpecError("controller spec: second_integrator/cglp apply only to 'custom'");
}

inline ResetStateSpace linear(const StateSpace& ss) { return ResetStateSpace(ss); }

// k_p-free PID core: (1 + w_i/s)(s/w_d + 1)/(s/w_t + 1) * 1/(s/w_f + 1)
inline StateSpace pid_core(const ControllerSpec& s) {
    const auto pi   = lti::tf_to_ss({{1.0, s.w_i}, {1.0, 0.0}}, "I");
    const auto lead = lti::tf_to_ss({{1.0 / s.w_d, 1.0}, {1.0 / s.w_t, 1.0}}, "lead");
    const auto tame = lti::tf_to_ss({{1.0}, {1.0 / s.w_f, 1.0}}, "tame");
    return lti::series(lti::series(pi, lead), tame).prefixed("PID");
}

inline ResetStateSpace second_integrator(const ControllerSpec& s, bool resetting) {
    return reset::make_reset_filter(FilterKind::pi, s.w_i2, resetting).prefixed("I2");
}

// Two branches PI(w_i2) -> LPF(w_bp) and PI(w_i2) -> HPF(w_bp), summed.
inline ResetStateSpace band_pass(const ControllerSpec& s, bool reset_int_lpf, bool reset_int_hpf, bool reset_lpf,
                                 bool reset_hpf) {
    const auto lo = reset::series(reset::make_reset_filter(FilterKind::pi, s.w_i2, reset_int_lpf),
                                  reset::make_reset_filter(FilterKind::lpf, s.w_bp, reset_lpf))
                        .prefixed("BPlo");
    const auto hi = reset::series(reset::make_reset_filter(FilterKind::pi, s.w_i2, reset_int_hpf),
                                  reset::make_reset_filter(FilterKind::hpf, s.w_bp, reset_hpf))
                        .prefixed("BPhi");
    return reset::parallel(lo, hi);
}

inline ResetStateSpace cglp_block(double w_r, double w_ra, double w_f) {
    const auto lead = lti::tf_to_ss({{1.0 / w_r, 1.0}, {1.0 / w_f, 1.0}}, "lead");
    return reset::series(reset::make_fore(w_ra), linear(lead)).prefixed("CgLp");
}

}  // namespace detail

/// CgLp element alone: resetting lag 1/(s/w_ra + 1) followed by lead (s/w_r + 1)/(s/w_f + 1).
[[nodiscard]] inline ResetStateSpace make_cglp(double w_r, double w_ra, double w_f) {
    if (!(w_r > 0.0) || !(w_ra > 0.0) || !(w_f > 0.0)) throw ParameterError("make_cglp: corners must be > 0");
    return detail::cglp_block(w_r, w_ra, w_f);
}

/**
 * Finds the lead corner w_r (with w_ra = w_r / alpha) for which the CgLp
 * describing function has phase `target_lead_deg` at w_c, by bisection on
 * log(w_r) over [w_c/100, 100 w_c]. The design is rejected when |DF| leaves
 * the +-1 dB band over [w_c/10, w_c].
 */
[[nodiscard]] inline CglpDesign design_cglp(double target_lead_deg, double w_c, double w_f_cglp, double alpha) {
    if (!(w_c > 0.0) || !(w_f_cglp > 0.0) || !(alpha > 0.0))
        throw ParameterError("design_cglp: w_c, w_f_cglp and alpha must be > 0");
    if (target_lead_deg == 0.0) {
        CglpDesign d;
        d.pass_through = true;
        return d;
    }
    if (!(target_lead_deg > 0.0 && target_lead_deg < 60.0))
        throw ParameterError("design_cglp: target lead must lie in (0, 60) degrees");

    auto phase_at = [&](double w_r) {
        return std::arg(harmonics::df(make_cglp(w_r, w_r / alpha, w_f_cglp), w_c)) * kRadToDeg - target_lead_deg;
    };
    double lo = std::log(w_c / 100.0), hi = std::log(w_c * 100.0);
    double f_lo = phase_at(std::exp(lo)), f_hi = phase_at(std::exp(hi));
    if (f_lo * f_hi > 0.0)
        throw DesignInfeasible("design_cglp: no lead corner in [w_c/100, 100 w_c] reaches the target phase");
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double f   = phase_at(std::exp(mid));
        if (f == 0.0) {
            lo = hi = mid;
            break;
        }
        if ((f < 0.0) == (f_lo < 0.0)) {
            lo   = mid;
            f_lo = f;
        } else {
            hi = mid;
        }
    }
    CglpDesign d;
    d.w_r       = std::exp(0.5 * (lo + hi));
    d.w_ra      = d.w_r / alpha;
    d.phase_deg = phase_at(d.w_r) + target_lead_deg;
    if (std::abs(d.phase_deg - target_lead_deg) > 0.1)
        throw DesignInfeasible("design_cglp: bisection did not reach the target phase within 0.1 deg");

    const auto cg = make_cglp(d.w_r, d.w_ra, w_f_cglp);
    d.min_gain_db = std::numeric_limits<double>::infinity();
    d.max_gain_db = -std::numeric_limits<double>::infinity();
    for (double w : harmonics::logspace(w_c / 10.0, w_c, 60)) {
        const double g = 20.0 * std::log10(std::abs(harmonics::df(cg, w)));
        d.min_gain_db  = std::min(d.min_gain_db, g);
        d.max_gain_db  = std::max(d.max_gain_db, g);
    }
    if (d.min_gain_db < -1.0 || d.max_gain_db > 1.0)
        throw DesignInfeasible("design_cglp: |DF| leaves the +-1 dB band over [w_c/10, w_c]");
    return d;
}

namespace detail {

inline std::optional<ResetStateSpace> cglp_front(const ControllerSpec& spec) {
    if (spec.w_r) return cglp_block(*spec.w_r, spec.w_ra ? *spec.w_ra : *spec.w_r / spec.alpha, spec.w_f_cglp);
    const auto d = design_cglp(spec.cglp_lead, spec.w_c, spec.w_f_cglp, spec.alpha);
    if (d.pass_through) return std::nullopt;
    return cglp_block(d.w_r, d.w_ra, spec.w_f_cglp);
}

inline bool tail_has_linear_i2(const ControllerSpec& s) {
    return s.name == ControllerKind::CGLP_PI2D ||
           (s.name == ControllerKind::custom && s.second_integrator == SecondIntegrator::linear);
}

}  // namespace detail

/// The leading, reset-carrying part of the controller (unit gain). Everything after it is linear.
[[nodiscard]] inline ResetStateSpace reset_part(const ControllerSpec& spec) {
    detail::validate(spec);
    switch (spec.name) {
        case ControllerKind::PID: return ResetStateSpace(StateSpace::gain(1.0));
        case ControllerKind::PI2D: return detail::second_integrator(spec, false);
        case ControllerKind::PICID: return detail::second_integrator(spec, true);
        case ControllerKind::C_IbLPF: return detail::band_pass(spec, true, false, false, false);
        case ControllerKind::C_IbHPF: return detail::band_pass(spec, false, true, false, false);
        case ControllerKind::C_LPF: return detail::band_pass(spec, false, false, true, false);
        case ControllerKind::C_HPF: return detail::band_pass(spec, false, false, false, true);
        case ControllerKind::CGLP_PI2D: {
            auto f = detail::cglp_front(spec);
            return f ? *f : ResetStateSpace(StateSpace::gain(1.0));
        }
        case ControllerKind::custom: {
            std::optional<ResetStateSpace> f;
            if (spec.cglp) f = detail::cglp_front(spec);
            if (spec.second_integrator == SecondIntegrator::reset) {
                auto i2 = detail::second_integrator(spec, true);
                f       = f ? reset::series(*f, i2) : i2;
            }
            return f ? *f : ResetStateSpace(StateSpace::gain(1.0));
        }
    }
    return ResetStateSpace(StateSpace::gain(1.0));
}

/// Linear remainder that follows reset_part(), k_p included.
[[nodiscard]] inline StateSpace linear_tail(const ControllerSpec& spec) {
    detail::validate(spec);
    auto tail = detail::pid_core(spec);
    if (detail::tail_has_linear_i2(spec)) tail = lti::series(detail::second_integrator(spec, false).base(), tail);
    return tail.scaled(spec.k_p);
}

/// Assembles the configured controller: reset_part() followed by linear_tail().
[[nodiscard]] inline ResetStateSpace build(const ControllerSpec& spec) {
    auto front = reset_part(spec);
    auto tail  = linear_tail(spec);
    if (front.order() == 0 && front.base().D() == 1.0) return ResetStateSpace(std::move(tail));
    return reset::series(front, ResetStateSpace(tail));
}

/// Scalar k with |DF(k * ctrl * plant)| = 1 at w_c.
[[nodiscard]] inline double tune_gain_for_bandwidth(const ResetStateSpace& ctrl, const StateSpace& plant, double w_c) {
    if (!(w_c > 0.0)) throw ParameterError("tune_gain_for_bandwidth: w_c must be > 0");
    const auto ol    = harmonics::open_loop(ctrl, plant);
    const double m0  = std::abs(harmonics::df(ol, w_c));
    const double mlo = std::abs(harmonics::df(ol, w_c / 1.05));
    const double mhi = std::abs(harmonics::df(ol, w_c * 1.05));
    if (!(m0 > 0.0) || !std::isfinite(m0)) throw TuningError("tune_gain_for_bandwidth: open-loop gain is zero or non-finite");
    if (!(mlo > m0 && m0 > mhi))
        throw TuningError("tune_gain_for_bandwidth: open-loop magnitude is not decreasing through w_c");
    return 1.0 / m0;
}

/**
 * DF-based phase margin: 180 deg plus the open-loop DF phase at the unique
 * gain crossover in [1, 1e5] rad/s.
 */
[[nodiscard]] inline MarginReport phase_margin(const ResetStateSpace& ctrl, const StateSpace& plant) {
    const auto ol = harmonics::open_loop(ctrl, plant);
    auto log_mag  = [&](double w) { return std::log(std::abs(harmonics::df(ol, w))); };

    const auto grid = harmonics::logspace(1.0, 1e5, 1001);
    std::vector<std::pair<double, double>> brackets;
    double prev_w = 0.0, prev_f = std::numeric_limits<double>::quiet_NaN();
    for (double w : grid) {
        double f = std::numeric_limits<double>::quiet_NaN();
        try {
            f = log_mag(w);
        } catch (const SingularityError&) {
        }
        if (std::isfinite(f) && std::isfinite(prev_f) && (prev_f > 0.0) != (f > 0.0)) brackets.emplace_back(prev_w, w);
        prev_w = w;
        prev_f = f;
    }
    if (brackets.empty()) throw MarginUndefined("phase_margin: no gain crossover in [1, 1e5] rad/s");
    if (brackets.size() > 1) throw MarginUndefined("phase_margin: gain crossover is not unique in [1, 1e5] rad/s");

    double lo = std::log(brackets[0].first), hi = std::log(brackets[0].second);
    const bool rising = log_mag(std::exp(lo)) < 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((log_mag(std::exp(mid)) < 0.0) == rising)
            lo = mid;
        else
            hi = mid;
    }
    MarginReport r;
    r.crossover = std::exp(0.5 * (lo + hi));
    double pm   = 180.0 + std::arg(harmonics::df(ol, r.crossover)) * kRadToDeg;
    while (pm > 180.0) pm -= 360.0;
    while (pm <= -180.0) pm += 360.0;
    r.margin_deg = pm;
    return r;
}

/// Builds the controller and rescales k_p so that the open loop crosses over at spec.w_c.
[[nodiscard]] inline ControllerSpec tuned(ControllerSpec spec, const StateSpace& plant) {
    spec.k_p     = 1.0;
    const auto k = tune_gain_for_bandwidth(build(spec), plant, spec.w_c);
    spec.k_p     = k;
    return spec;
}

}  // namespace controllers
}  // namespace resetloop
