#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "lti.hpp"
#include "numerics.hpp"
#include "plant.hpp"
#include "reset_system.hpp"

namespace resetloop {

enum class SignalKind { sine, bandnoise, step };
enum class SimMode { disturbance, reference, step };
/// How the sampled controller approximates its continuous dynamics.
enum class Discretization { tustin, zoh };

[[nodiscard]] constexpr std::string_view to_string(SignalKind k) {
    switch (k) {
        case SignalKind::sine: return "sine";
        case SignalKind::bandnoise: return "bandnoise";
        case SignalKind::step: return "step";
    }
    return "?";
}

[[nodiscard]] constexpr std::string_view to_string(SimMode m) {
    switch (m) {
        case SimMode::disturbance: return "disturbance";
        case SimMode::reference: return "reference";
        case SimMode::step: return "step";
    }
    return "?";
}

[[nodiscard]] constexpr std::string_view to_string(Discretization d) {
    return d == Discretization::tustin ? "tustin" : "zoh";
}

[[nodiscard]] inline Discretization parse_discretization(std::string_view s) {
    if (s == "tustin") return Discretization::tustin;
    if (s == "zoh") return Discretization::zoh;
    throw ParameterError("unknown discretization '" + std::string(s) + "' (expected tustin or zoh)");
}

[[nodiscard]] inline SimMode parse_sim_mode(std::string_view s) {
    if (s == "disturbance") return SimMode::disturbance;
    if (s == "reference") return SimMode::reference;
    if (s == "step") return SimMode::step;
    throw ParameterError("unknown mode '" + std::string(s) + "' (expected disturbance, reference or step)");
}

[[nodiscard]] inline SignalKind parse_signal_kind(std::string_view s) {
    if (s == "sine") return SignalKind::sine;
    if (s == "bandnoise" || s == "noise") return SignalKind::bandnoise;
    if (s == "step") return SignalKind::step;
    throw ParameterError("unknown signal '" + std::string(s) + "' (expected sine, bandnoise or step)");
}

struct SignalSpec {
    SignalKind kind   = SignalKind::sine;
    double freq_hz    = 10.0;  // sine
    double f_lo       = 0.5;   // bandnoise band, Hz
    double f_hi       = 30.0;
    double amplitude  = 1.0;   // sine peak, noise RMS, step height
    std::uint64_t seed = 1;

    /// Highest frequency the signal is meant to carry (0 for a step).
    [[nodiscard]] double top_frequency() const {
        switch (kind) {
            case SignalKind::sine: return freq_hz;
            case SignalKind::bandnoise: return f_hi;
            case SignalKind::step: return 0.0;
        }
        return 0.0;
    }
};

struct SimConfig {
    double fs                = 10000.0;  // Hz
    double duration          = 60.0;     // s
    SimMode mode             = SimMode::disturbance;
    SignalSpec signal{};
    double transient_discard = 5.0;  // s, excluded from metrics
    Discretization controller_discretization = Discretization::tustin;

    void validate() const {
        if (!(fs > 0.0) || !std::isfinite(fs)) throw ParameterError("SimConfig: fs must be > 0");
        if (!(duration > 0.0) || !std::isfinite(duration)) throw ParameterError("SimConfig: duration must be > 0");
        if (!(transient_discard >= 0.0) || !(duration > transient_discard))
            throw ParameterError("SimConfig: duration must exceed transient_discard");
        if (!(signal.amplitude >= 0.0) || !std::isfinite(signal.amplitude))
            throw ParameterError("SimConfig: amplitude must be finite and >= 0");
        if (signal.kind == SignalKind::sine && !(signal.freq_hz > 0.0))
            throw ParameterError("SimConfig: sine frequency must be > 0");
        if (signal.kind == SignalKind::bandnoise) {
            if (!(signal.f_lo > 0.0) || !(signal.f_hi > signal.f_lo))
                throw ParameterError("SimConfig: noise band needs 0 < f_lo < f_hi");
        }
        const double top = signal.top_frequency();
        if (top > 0.0 && !(fs > 20.0 * top))
            throw ParameterError("SimConfig: fs must exceed 20x the highest signal frequency");
        if ((mode == SimMode::step) != (signal.kind == SignalKind::step))
            throw ParameterError("SimConfig: step mode requires a step signal and vice versa");
    }
};

/// Sampled closed-loop record. Metrics use samples from `discard` seconds on.
struct SimTrace {
    double fs      = 0.0;
    double discard = 0.0;
    std::vector<double> t, r, y, e, u, d;
    std::vector<ResetEvent> reset_events;
    std::vector<Eigen::Index> resetting_indices;  // controller states touched by the jump map

    [[nodiscard]] std::size_t size() const noexcept { return t.size(); }
    [[nodiscard]] std::size_t first_metric_sample() const {
        return static_cast<std::size_t>(std::llround(discard * fs));
    }
};

namespace simulate {

namespace detail {

/// Direct-form-II-transposed biquad.
struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
    double z1 = 0, z2 = 0;

    double step(double x) {
        const double y = b0 * x + z1;
        z1             = b1 * x - a1 * y + z2;
        z2             = b2 * x - a2 * y;
        return y;
    }
};

// Second-order Butterworth sections via the prewarped bilinear transform.
inline Biquad butter2(double f0, double fs, bool highpass) {
    const double w0    = 2.0 * std::numbers::pi * f0 / fs;
    const double cw    = std::cos(w0);
    const double one_m = 2.0 * std::sin(0.5 * w0) * std::sin(0.5 * w0);  // 1 - cos(w0) without cancellation
    const double alpha = std::sin(w0) / std::numbers::sqrt2;               // Q = 1/sqrt(2)
    const double a0    = 1.0 + alpha;
    Biquad q;
    if (highpass) {
        const double onep = 2.0 - one_m;
        q.b0 = onep / 2.0 / a0;
        q.b1 = -onep / a0;
        q.b2 = onep / 2.0 / a0;
    } else {
        q.b0 = one_m / 2.0 / a0;
        q.b1 = one_m / a0;
        q.b2 = one_m / 2.0 / a0;
    }
    q.a1 = -2.0 * cw / a0;
    q.a2 = (1.0 - alpha) / a0;
    return q;
}

inline std::size_t sample_count(double fs, double duration) {
    const double n = std::round(fs * duration);
    if (!(n >= 1.0) || n > 1e10) throw ParameterError("sample count out of range");
    return static_cast<std::size_t>(n);
}

}  // namespace detail

/**
 * Samples a test signal at t = k/fs, k = 0..round(fs*duration)-1.
 * bandnoise: seeded Gaussian samples through 2nd-order Butterworth high-pass
 * (f_lo) and low-pass (f_hi) sections, rescaled to RMS = amplitude.
 */
[[nodiscard]] inline std::vector<double> gen_signal(const SignalSpec& spec, double fs, double duration) {
    if (!(fs > 0.0)) throw ParameterError("gen_signal: fs must be > 0");
    const auto n = detail::sample_count(fs, duration);
    std::vector<double> x(n);
    switch (spec.kind) {
        case SignalKind::sine: {
            const double w = 2.0 * std::numbers::pi * spec.freq_hz;
            for (std::size_t k = 0; k < n; ++k) x[k] = spec.amplitude * std::sin(w * static_cast<double>(k) / fs);
            break;
        }
        case SignalKind::step:
            for (auto& v : x) v = spec.amplitude;
            break;
        case SignalKind::bandnoise: {
            if (!(spec.f_lo > 0.0) || !(spec.f_hi > spec.f_lo) || !(spec.f_hi < fs / 2.0))
                throw ParameterError("gen_signal: noise band needs 0 < f_lo < f_hi < fs/2");
            std::mt19937_64 rng(spec.seed);
            std::normal_distribution<double> normal(0.0, 1.0);
            auto hp = detail::butter2(spec.f_lo, fs, true);
            auto lp = detail::butter2(spec.f_hi, fs, false);
            // Run the filters into steady state before the first kept sample.
            const auto warm = static_cast<std::size_t>(std::ceil(10.0 * fs / spec.f_lo));
            for (std::size_t k = 0; k < warm; ++k) (void)lp.step(hp.step(normal(rng)));
            double ss = 0.0;
            for (auto& v : x) {
                v = lp.step(hp.step(normal(rng)));
                ss += v * v;
            }
            const double rms = std::sqrt(ss / static_cast<double>(n));
            if (!(rms > 0.0)) throw ParameterError("gen_signal: degenerate noise record");
            for (auto& v : x) v *= spec.amplitude / rms;
            break;
        }
    }
    return x;
}

/// Sign change between e[k-1] and e[k], or e[k] lands exactly on zero coming from a non-zero value.
/// Compared by sign rather than by product, which underflows for tiny values.
[[nodiscard]] inline bool crosses_zero(double e_prev, double e_now) {
    return (e_prev < 0.0 && e_now > 0.0) || (e_prev > 0.0 && e_now < 0.0) || (e_now == 0.0 && e_prev != 0.0);
}

namespace detail {

// Discrete closed loop with r = d = 0: states [x_c; x_p].
inline Matrix closed_loop_matrix(const DiscreteStateSpace& c, const DiscreteStateSpace& p) {
    const auto nc = c.Ad.rows(), np = p.Ad.rows();
    Matrix m(nc + np, nc + np);
    m.topLeftCorner(nc, nc)     = c.Ad;
    m.topRightCorner(nc, np)    = -c.Bd * p.C;
    m.bottomLeftCorner(np, nc)  = p.Bd * c.C;
    m.bottomRightCorner(np, np) = p.Ad - p.Bd * (c.D * p.C);
    return m;
}

inline void require_error_reset(const ResetStateSpace& ctrl) {
    if (ctrl.has_reset() && ctrl.condition().signal != "e")
        throw UnsupportedConfiguration("simulate: only resets on the loop error 'e' can be simulated");
}

}  // namespace detail

/// Spectral-radius slack for marginal modes. Clustered eigenvalues near 1 carry ~sqrt(eps) error.
inline constexpr double kMarginalTolerance = 1e-6;

namespace detail {
inline DiscreteStateSpace discretize(const StateSpace& sys, double fs, Discretization how) {
    return how == Discretization::tustin ? lti::tustin_discretize(sys, fs) : lti::zoh_discretize(sys, fs);
}
}  // namespace detail

/// Closed-loop spectral radius of the linear base loop (resets ignored).
[[nodiscard]] inline double base_loop_spectral_radius(const ResetStateSpace& ctrl, const StateSpace& plant, double fs,
                                                      Discretization how = Discretization::tustin) {
    const auto c = detail::discretize(ctrl.base(), fs, how);
    const auto p = lti::zoh_discretize(plant, fs);
    return numerics::spectral_radius(detail::closed_loop_matrix(c, p));
}

/**
 * Sample-synchronous closed loop. At each step the plant output is read, the
 * error e = r - y is formed, the controller state is brought up to the
 * current sample, the jump map is applied on a zero crossing of e, the
 * controller output u = C x_c + D e is computed, and the ZOH-discretized
 * plant advances one sample with input u + d.
 *
 * Controller flow: tustin integrates x' = A x + B e with the trapezoidal rule
 * over [k-1, k] (needs e[k], available since the plant is strictly proper);
 * zoh holds e[k-1] over the interval. Either way x_c approximates the
 * continuous controller state, so the jump map acts on the same coordinates.
 *
 * Refuses to run when the linear base loop is unstable; marginal modes
 * (|lambda| = 1) are accepted.
 */
[[nodiscard]] inline SimTrace run(const ResetStateSpace& ctrl, const StateSpace& plant, const SimConfig& cfg) {
    cfg.validate();
    detail::require_error_reset(ctrl);
    if (plant.D() != 0.0) throw ParameterError("simulate: plant must be strictly proper");
    if (plant.order() == 0) throw ParameterError("simulate: plant has no states");

    const auto how = cfg.controller_discretization;
    const auto pd  = lti::zoh_discretize(plant, cfg.fs);
    const double rho =
        numerics::spectral_radius(detail::closed_loop_matrix(detail::discretize(ctrl.base(), cfg.fs, how), pd));
    if (rho > 1.0 + kMarginalTolerance)
        throw UnstableLoop("simulate: linear base loop is unstable (spectral radius " + std::to_string(rho) + ")");

    const auto n = detail::sample_count(cfg.fs, cfg.duration);
    std::vector<double> sig = gen_signal(cfg.signal, cfg.fs, cfg.duration);

    SimTrace tr;
    tr.fs                = cfg.fs;
    tr.discard           = cfg.transient_discard;
    tr.resetting_indices = ctrl.resetting_indices();
    tr.t.resize(n);
    tr.r.assign(n, 0.0);
    tr.d.assign(n, 0.0);
    tr.y.resize(n);
    tr.e.resize(n);
    tr.u.resize(n);
    if (cfg.mode == SimMode::disturbance)
        tr.d = std::move(sig);
    else
        tr.r = std::move(sig);

    // x[k] = flow_a x[k-1] + flow_b (w_prev e[k-1] + w_now e[k])
    Matrix flow_a;
    Vector flow_b;
    double w_prev = 1.0, w_now = 0.0;
    if (how == Discretization::tustin) {
        const double h  = 0.5 / cfg.fs;
        const Matrix id = Matrix::Identity(ctrl.order(), ctrl.order());
        flow_a = lti::tustin_discretize(ctrl.base(), cfg.fs).Ad;
        flow_b = numerics::solve_real(id - h * ctrl.base().A(), h * ctrl.base().B());
        w_now  = 1.0;
    } else {
        const auto z = lti::zoh_discretize(ctrl.base(), cfg.fs);
        flow_a = z.Ad;
        flow_b = z.Bd;
    }
    const RowVector& cc = ctrl.base().C();
    const double dc     = ctrl.base().D();

    const bool resets = !ctrl.is_linear();
    Vector xc         = Vector::Zero(flow_a.rows());
    Vector xp         = Vector::Zero(pd.Ad.rows());
    Vector tmp_c(xc.size()), tmp_p(xp.size());
    double e_prev = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) / cfg.fs;
        const double y = pd.C.dot(xp);
        const double e = tr.r[k] - y;
        if (k > 0) {
            tmp_c.noalias() = flow_a * xc;
            xc              = tmp_c + flow_b * (w_prev * e_prev + w_now * e);
        }
        if (resets && crosses_zero(e_prev, e)) {
            ResetEvent ev;
            ev.time      = t;
            ev.pre_state = xc;
            xc           = reset::apply_reset(ctrl, xc);
            ev.post_state = xc;
            tr.reset_events.push_back(std::move(ev));
        }
        const double u = cc.dot(xc) + dc * e;
        if (!std::isfinite(u) || !std::isfinite(y) || std::abs(u) > 1e150 || std::abs(y) > 1e150)
            throw DivergenceError("simulate: state diverged", k);
        tr.t[k] = t;
        tr.y[k] = y;
        tr.e[k] = e;
        tr.u[k] = u;
        tmp_p.noalias() = pd.Ad * xp;
        xp              = tmp_p + pd.Bd * (u + tr.d[k]);
        e_prev          = e;
    }
    return tr;
}

[[nodiscard]] inline SimTrace run(const ResetStateSpace& ctrl, const PlantModel& plant, const SimConfig& cfg) {
    return run(ctrl, plant.state_space(), cfg);
}

/// Step in the reference of height `amplitude`, 2 s by default.
[[nodiscard]] inline SimTrace step_response(const ResetStateSpace& ctrl, const StateSpace& plant, double amplitude = 1.0,
                                            double duration = 2.0, double fs = 10000.0) {
    SimConfig cfg;
    cfg.fs                = fs;
    cfg.duration          = duration;
    cfg.mode              = SimMode::step;
    cfg.signal.kind       = SignalKind::step;
    cfg.signal.amplitude  = amplitude;
    cfg.transient_discard = 0.0;
    return run(ctrl, plant, cfg);
}

struct OpenLoopTrace {
    std::vector<double> y;
    std::vector<ResetEvent> reset_events;
};

/**
 * Drives the controller directly with samples e[k] (ZOH between samples),
 * resetting on zero crossings of e. y[k] = C x[k] + D e[k].
 *
 * `observe(k, x, e_k)` sees the state after any jump at sample k, before the update.
 */
template <class Observer>
[[nodiscard]] OpenLoopTrace run_open_loop(const ResetStateSpace& ctrl, const std::vector<double>& e, double fs,
                                          Observer&& observe) {
    detail::require_error_reset(ctrl);
    const auto cd     = lti::zoh_discretize(ctrl.base(), fs);
    const bool resets = !ctrl.is_linear();
    OpenLoopTrace out;
    out.y.resize(e.size());
    Vector x = Vector::Zero(cd.Ad.rows());
    Vector tmp(x.size());
    double e_prev = 0.0;
    for (std::size_t k = 0; k < e.size(); ++k) {
        if (resets && crosses_zero(e_prev, e[k])) {
            ResetEvent ev;
            ev.time      = static_cast<double>(k) / fs;
            ev.pre_state = x;
            x            = reset::apply_reset(ctrl, x);
            ev.post_state = x;
            out.reset_events.push_back(std::move(ev));
        }
        observe(k, static_cast<const Vector&>(x), e[k]);
        out.y[k]      = cd.C.dot(x) + cd.D * e[k];
        tmp.noalias() = cd.Ad * x;
        x             = tmp + cd.Bd * e[k];
        e_prev        = e[k];
    }
    return out;
}

[[nodiscard]] inline OpenLoopTrace run_open_loop(const ResetStateSpace& ctrl, const std::vector<double>& e, double fs) {
    return run_open_loop(ctrl, e, fs, [](std::size_t, const Vector&, double) {});
}

namespace detail {
inline std::string fmt(double v) { return plant::detail::format_double(v); }
}  // namespace detail

inline void write_trace_csv(std::ostream& out, const SimTrace& tr) {
    out << "t_s,r,y,e,u,d\n";
    for (std::size_t k = 0; k < tr.size(); ++k)
        out << detail::fmt(tr.t[k]) << ',' << detail::fmt(tr.r[k]) << ',' << detail::fmt(tr.y[k]) << ','
            << detail::fmt(tr.e[k]) << ',' << detail::fmt(tr.u[k]) << ',' << detail::fmt(tr.d[k]) << '\n';
}

/// One row per resetting state per event.
inline void write_resets_csv(std::ostream& out, const SimTrace& tr) {
    out << "time_s,state_index,pre,post\n";
    for (const auto& ev : tr.reset_events)
        for (auto i : tr.resetting_indices)
            out << detail::fmt(ev.time) << ',' << i << ',' << detail::fmt(ev.pre_state(i)) << ','
                << detail::fmt(ev.post_state(i)) << '\n';
}

}  // namespace simulate
}  // namespace resetloop
