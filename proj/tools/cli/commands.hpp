#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include <resetloop/resetloop.hpp>

#include "io.hpp"
#include "settings.hpp"

namespace resetloop::cli {

inline constexpr int kExitOk      = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage   = 2;

/// Output directory: explicit flag, else $RESETLOOP_OUT, else ./resetloop_out.
inline fs::path resolve_out_dir(const std::optional<std::string>& flag) {
    if (flag && !flag->empty()) return *flag;
    if (const char* env = std::getenv("RESETLOOP_OUT"); env && *env) return env;
    return "resetloop_out";
}

/// Collects outputs of one command and writes its manifest.
class Run {
public:
    Run(std::string command, Settings settings, fs::path out, std::ostream& log)
        : command_(std::move(command)), settings_(std::move(settings)), out_(std::move(out)), log_(log) {
        fs::create_directories(out_);
    }

    [[nodiscard]] const Settings& settings() const noexcept { return settings_; }
    [[nodiscard]] const fs::path& out() const noexcept { return out_; }
    [[nodiscard]] std::ostream& log() const noexcept { return log_; }
    [[nodiscard]] const std::vector<std::string>& outputs() const noexcept { return outputs_; }

    void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
        write_atomic(out_ / name, body);
        std::lock_guard lock(mu_);
        outputs_.push_back(name);
    }

    void warn(const std::string& w) {
        std::lock_guard lock(mu_);
        warnings_.push_back(w);
        log_ << "warning: " << w << '\n';
    }

    void add_extra(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }

    /// Sorted output list keeps the manifest independent of thread scheduling.
    void finish(int exit_code) {
        auto files = outputs_;
        std::sort(files.begin(), files.end());
        nlohmann::ordered_json m;
        m["command"]      = command_;
        m["tool_version"] = kVersion;
        m["timestamp"]    = utc_timestamp();
        m["seed"]         = settings_.seed;
        m["exit_code"]    = exit_code;
        m["config_ini"]   = to_ini(settings_);
        m["outputs"]      = files;
        m["warnings"]     = warnings_;
        for (auto& [k, v] : extra_.items()) m[k] = v;
        write_atomic(out_ / "manifest.json", [&](std::ostream& o) { o << m.dump(2) << '\n'; });
    }

private:
    std::string command_;
    Settings settings_;
    fs::path out_;
    std::ostream& log_;
    std::vector<std::string> outputs_;
    std::vector<std::string> warnings_;
    nlohmann::json extra_ = nlohmann::json::object();
    std::mutex mu_;
};

namespace detail {

inline std::string fmt(double v) { return plant::detail::format_double(v); }

inline double mag_db(Complex v) { return 20.0 * std::log10(std::abs(v)); }
inline double phase_deg(Complex v) { return std::arg(v) * 180.0 / std::numbers::pi; }

inline std::string freq_tag(double f) { return fmt(f) + "Hz"; }

/// Runs tasks on up to `jobs` threads; each task owns its result slot.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const auto workers = static_cast<std::size_t>(std::clamp(jobs, 1, 256));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    for (auto& t : pool) t.join();
}

inline std::string margin_diagnostic(const ResetStateSpace& ctrl, const StateSpace& plant) {
    try {
        const auto pm = controllers::phase_margin(ctrl, plant);
        return "crossover " + fmt(pm.crossover) + " rad/s, DF phase margin " + fmt(pm.margin_deg) + " deg";
    } catch (const Error& e) {
        return std::string("margin unavailable: ") + e.what();
    }
}

inline SimTrace run_checked(const ResetStateSpace& ctrl, const StateSpace& plant, const SimConfig& cfg) {
    try {
        return simulate::run(ctrl, plant, cfg);
    } catch (const UnstableLoop& e) {
        throw UnstableLoop(std::string(e.what()) + "; " + margin_diagnostic(ctrl, plant));
    }
}

inline void report_plant(Run& run, const ResolvedPlant& p) {
    for (const auto& w : p.warnings) run.warn(w);
    nlohmann::json j{{"form", std::string(to_string(p.model.form))},
                     {"m", p.model.m},
                     {"c", p.model.c},
                     {"k", p.model.k},
                     {"gain", p.model.gain},
                     {"actuator_pole", p.model.actuator_pole}};
    if (p.fit_residual) j["fit_residual"] = *p.fit_residual;
    run.add_extra("plant", j);
}

inline nlohmann::json spec_json(const ControllerSpec& s) {
    nlohmann::json j{{"name", std::string(to_string(s.name))},
                     {"k_p", s.k_p},
                     {"w_i", s.w_i},
                     {"w_d", s.w_d},
                     {"w_t", s.w_t},
                     {"w_f", s.w_f},
                     {"w_i2", s.w_i2},
                     {"w_bp", s.w_bp},
                     {"w_f_cglp", s.w_f_cglp},
                     {"alpha", s.alpha},
                     {"cglp_lead", s.cglp_lead},
                     {"w_c", s.w_c}};
    if (s.w_r) j["w_r"] = *s.w_r;
    if (s.w_ra) j["w_ra"] = *s.w_ra;
    return j;
}

}  // namespace detail

// ---------------------------------------------------------------- bode / hosidf

inline int cmd_bode(Run& run, bool hosidf_alias) {
    const auto& s = run.settings();
    auto orders = s.harmonics;
    if (orders.empty()) orders = hosidf_alias ? std::vector<int>{3} : std::vector<int>{1};
    for (int n : orders) {
        if (n < 1) throw SpecError("bode: harmonic orders must be >= 1");
        if (hosidf_alias && n < 2) throw SpecError("hosidf: harmonic orders must be >= 2 (use bode for n = 1)");
    }
    if (s.loop != "open" && s.loop != "controller") throw SpecError("bode: loop must be 'open' or 'controller'");
    std::vector<std::string> names = s.controllers;
    if (names.empty())
        for (auto k : kNamedControllers) names.emplace_back(to_string(k));
    for (const auto& n : names) {
        if (is_element_name(n)) continue;
        try {
            (void)parse_controller_kind(n);
        } catch (const SpecError&) {
            throw SpecError("unknown controller '" + n + "'; valid names: " + valid_bode_names());
        }
    }

    const auto plant = resolve_plant(s);
    detail::report_plant(run, plant);
    nlohmann::json specs = nlohmann::json::array();
    std::map<int, std::vector<Series>> mag_series, phase_series;
    std::size_t gaps = 0;
    for (const auto& name : names) {
        const auto npts = static_cast<std::size_t>(s.points);
        HarmonicResponse resp;
        if (is_element_name(name)) {
            const auto el = resolve_element(s, name);
            resp = s.loop == "open" ? harmonics::sweep_cascade(el, plant.ss, s.w_min, s.w_max, npts, orders)
                                    : harmonics::sweep(el, s.w_min, s.w_max, npts, orders);
        } else {
            const auto spec = resolve_spec(s, name, plant.ss);
            specs.push_back(detail::spec_json(spec));
            auto tail = controllers::linear_tail(spec);
            if (s.loop == "open") tail = lti::series(tail, plant.ss);
            resp = harmonics::sweep_cascade(controllers::reset_part(spec), tail, s.w_min, s.w_max, npts, orders);
        }
        gaps += resp.gaps.size();
        for (int n : orders) {
            const auto& v = resp.at_order(n);
            Series ms{name, resp.omega, {}}, ps{name, resp.omega, {}};
            run.write("bode_" + name + "_h" + std::to_string(n) + ".csv", [&](std::ostream& o) {
                o << "omega_rad_s,mag_db,phase_deg\n";
                for (std::size_t i = 0; i < v.size(); ++i) {
                    const double md = detail::mag_db(v[i]);
                    const double pd = v[i] == Complex{} ? 0.0 : detail::phase_deg(v[i]);
                    ms.y.push_back(md);
                    ps.y.push_back(pd);
                    o << detail::fmt(resp.omega[i]) << ',' << detail::fmt(md) << ',' << detail::fmt(pd) << '\n';
                }
            });
            mag_series[n].push_back(std::move(ms));
            phase_series[n].push_back(std::move(ps));
        }
    }
    if (gaps) run.warn(std::to_string(gaps) + " frequency points were singular and left as NaN gaps");
    if (s.svg) {
        for (int n : orders) {
            run.write("bode_h" + std::to_string(n) + ".svg", [&](std::ostream& o) {
                write_svg(o, (s.loop == "open" ? "Open loop, harmonic " : "Controller, harmonic ") + std::to_string(n),
                          "omega [rad/s]", true,
                          {Panel{"magnitude [dB]", mag_series[n]}, Panel{"phase [deg]", phase_series[n]}});
            });
        }
    }
    run.add_extra("controllers", specs);
    return kExitOk;
}

// ---------------------------------------------------------------- simulate / step

inline SimConfig sim_config(const Settings& s, SimMode mode, double default_duration) {
    SimConfig cfg;
    cfg.fs                = s.fs;
    cfg.duration          = s.duration.value_or(default_duration);
    cfg.mode              = mode;
    cfg.transient_discard = mode == SimMode::step ? 0.0 : s.transient;
    cfg.signal.amplitude  = s.amplitude;
    cfg.signal.seed       = s.seed;
    cfg.signal.f_lo       = s.f_lo;
    cfg.signal.f_hi       = s.f_hi;
    cfg.signal.freq_hz    = s.freq;
    cfg.signal.kind       = mode == SimMode::step ? SignalKind::step : parse_signal_kind(s.signal);
    cfg.controller_discretization = parse_discretization(s.discretization);
    return cfg;
}

inline void write_step_outputs(Run& run, const std::string& name, const SimTrace& tr) {
    const auto sm = metrics::step_metrics(tr);
    const auto em = metrics::rms_max(tr);
    run.write("metrics.csv", [&](std::ostream& o) {
        metrics::write_metrics_csv(o, {{name, "step", 0.0, em}});
    });
    run.write("step_metrics.csv", [&](std::ostream& o) {
        o << "controller,overshoot_pct,settling_time_s,final_value\n"
          << name << ',' << detail::fmt(sm.overshoot_pct) << ',' << detail::fmt(sm.settling_time) << ','
          << detail::fmt(sm.final_value) << '\n';
    });
    run.log() << name << ": overshoot " << sm.overshoot_pct << " %, settling " << sm.settling_time << " s\n";
}

inline void write_trace_svg(Run& run, const std::string& file, const std::string& title, const SimTrace& tr) {
    // Decimate to ~4000 points per line.
    const std::size_t stride = std::max<std::size_t>(1, tr.size() / 4000);
    Series r{"r", {}, {}}, y{"y", {}, {}}, e{"e", {}, {}};
    for (std::size_t i = 0; i < tr.size(); i += stride) {
        r.x.push_back(tr.t[i]);
        r.y.push_back(tr.r[i]);
        y.x.push_back(tr.t[i]);
        y.y.push_back(tr.y[i]);
        e.x.push_back(tr.t[i]);
        e.y.push_back(tr.e[i]);
    }
    run.write(file, [&](std::ostream& o) {
        write_svg(o, title, "time [s]", false, {Panel{"r, y", {r, y}}, Panel{"error e", {e}}});
    });
}

inline int cmd_simulate(Run& run) {
    const auto& s     = run.settings();
    const auto plant  = resolve_plant(s);
    detail::report_plant(run, plant);
    const auto spec   = resolve_spec(s, s.controller, plant.ss);
    const auto ctrl   = controllers::build(spec);
    run.add_extra("controllers", nlohmann::json::array({detail::spec_json(spec)}));
    const SimMode mode = parse_sim_mode(s.mode);
    const auto cfg     = sim_config(s, mode, mode == SimMode::step ? 2.0 : 60.0);
    const auto tr      = detail::run_checked(ctrl, plant.ss, cfg);

    run.write("trace.csv", [&](std::ostream& o) { simulate::write_trace_csv(o, tr); });
    run.write("resets.csv", [&](std::ostream& o) { simulate::write_resets_csv(o, tr); });
    if (mode == SimMode::step) {
        write_step_outputs(run, s.controller, tr);
    } else {
        const auto m = metrics::rms_max(tr);
        const std::string scenario = std::string(to_string(mode)) + "_" + std::string(to_string(cfg.signal.kind));
        const double f = cfg.signal.kind == SignalKind::sine ? cfg.signal.freq_hz : 0.0;
        run.write("metrics.csv", [&](std::ostream& o) { metrics::write_metrics_csv(o, {{s.controller, scenario, f, m}}); });
        if (cfg.signal.kind == SignalKind::bandnoise)
            run.write("cpsd.csv", [&](std::ostream& o) { metrics::write_cpsd_csv(o, metrics::cpsd(tr)); });
        run.log() << s.controller << " " << scenario << ": rms " << m.rms << ", max " << m.max_abs << '\n';
    }
    if (s.svg) write_trace_svg(run, "trace.svg", s.controller + " " + s.mode, tr);
    return kExitOk;
}

inline int cmd_step(Run& run) {
    const auto& s    = run.settings();
    const auto plant = resolve_plant(s);
    detail::report_plant(run, plant);
    const auto spec  = resolve_spec(s, s.controller, plant.ss);
    const auto ctrl  = controllers::build(spec);
    run.add_extra("controllers", nlohmann::json::array({detail::spec_json(spec)}));
    const auto tr    = detail::run_checked(ctrl, plant.ss, sim_config(s, SimMode::step, 2.0));
    run.write("trace.csv", [&](std::ostream& o) { simulate::write_trace_csv(o, tr); });
    run.write("resets.csv", [&](std::ostream& o) { simulate::write_resets_csv(o, tr); });
    write_step_outputs(run, s.controller, tr);
    if (s.svg) write_trace_svg(run, "step.svg", s.controller + " step", tr);
    return kExitOk;
}

// ---------------------------------------------------------------- report

struct ReportCell {
    std::string controller;
    SimMode mode = SimMode::disturbance;
    double freq_hz = 0.0;
    bool ok        = false;
    ErrorMetrics m;
    std::string error;
};

struct CheckResult {
    std::string id;
    bool pass = false;
    std::string detail;
};

struct ReportResult {
    std::vector<std::string> controllers;
    std::vector<double> freqs;
    std::vector<SimMode> modes;
    std::vector<ReportCell> cells;
    std::map<std::string, StepMetrics> steps;
    std::map<std::string, std::string> failures;  // run label -> message
    std::vector<CheckResult> checks;

    [[nodiscard]] const ReportCell* find(const std::string& c, SimMode m, double f) const {
        for (const auto& cell : cells)
            if (cell.controller == c && cell.mode == m && cell.freq_hz == f && cell.ok) return &cell;
        return nullptr;
    }
};

/// Ordering properties over a finished report.
inline std::vector<CheckResult> trend_checks(const ReportResult& r) {
    std::vector<CheckResult> out;
    auto missing = [](const std::string& id) { return CheckResult{id, false, "required runs not available"}; };
    const auto D = SimMode::disturbance, R = SimMode::reference;

    {
        CheckResult c{"PI2D disturbance rms < PID at 0.5/10/20 Hz", true, ""};
        for (double f : {0.5, 10.0, 20.0}) {
            const auto *a = r.find("PI2D", D, f), *b = r.find("PID", D, f);
            if (!a || !b) {
                c = missing(c.id);
                break;
            }
            c.detail += detail::freq_tag(f) + ": " + detail::fmt(a->m.rms) + " vs " + detail::fmt(b->m.rms) + "; ";
            c.pass = c.pass && a->m.rms < b->m.rms;
        }
        out.push_back(c);
    }
    {
        CheckResult c{"PICID max error > PI2D at 10 Hz disturbance", false, ""};
        const auto *a = r.find("PICID", D, 10.0), *b = r.find("PI2D", D, 10.0);
        if (!a || !b)
            c = missing(c.id);
        else {
            c.pass   = a->m.max_abs > b->m.max_abs;
            c.detail = detail::fmt(a->m.max_abs) + " vs " + detail::fmt(b->m.max_abs);
        }
        out.push_back(c);
    }
    {
        CheckResult c{"CGLP_PI2D minimum rms at 20 Hz reference", true, ""};
        const auto* cg = r.find("CGLP_PI2D", R, 20.0);
        if (!cg)
            c = missing(c.id);
        else {
            for (auto k : kNamedControllers) {
                const std::string n(to_string(k));
                const auto* o = r.find(n, R, 20.0);
                if (!o) {
                    c = missing(c.id);
                    break;
                }
                if (n != "CGLP_PI2D" && !(cg->m.rms < o->m.rms)) {
                    c.pass = false;
                    c.detail += n + " " + detail::fmt(o->m.rms) + " <= " + detail::fmt(cg->m.rms) + "; ";
                }
            }
            if (c.pass) c.detail = "CGLP_PI2D rms " + detail::fmt(cg->m.rms);
        }
        out.push_back(c);
    }
    {
        CheckResult c{"C_IbLPF, C_LPF, C_HPF within 2% of PI2D", true, ""};
        double worst = 0.0;
        std::string where;
        bool complete = true;
        for (const char* n : {"C_IbLPF", "C_LPF", "C_HPF"})
            for (auto m : {R, D})
                for (double f : {0.5, 10.0, 20.0}) {
                    const auto *a = r.find(n, m, f), *b = r.find("PI2D", m, f);
                    if (!a || !b) {
                        complete = false;
                        continue;
                    }
                    const std::pair<double, double> pairs[] = {{a->m.rms, b->m.rms}, {a->m.max_abs, b->m.max_abs}};
                    for (std::size_t q = 0; q < 2; ++q) {
                        const double dev = std::abs(pairs[q].first / pairs[q].second - 1.0);
                        if (dev > 0.02) c.pass = false;
                        if (dev > worst) {
                            worst = dev;
                            where = std::string(n) + " " + std::string(to_string(m)) + " " + detail::freq_tag(f) +
                                    (q == 0 ? " rms" : " max");
                        }
                    }
                }
        if (!complete)
            c = missing(c.id);
        else
            c.detail = "worst deviation " + detail::fmt(100.0 * worst) + "% (" + where + ")";
        out.push_back(c);
    }
    {
        CheckResult c{"step overshoot CGLP_PI2D < PI2D", false, ""};
        auto a = r.steps.find("CGLP_PI2D"), b = r.steps.find("PI2D");
        if (a == r.steps.end() || b == r.steps.end())
            c = missing(c.id);
        else {
            c.pass   = a->second.overshoot_pct < b->second.overshoot_pct;
            c.detail = detail::fmt(a->second.overshoot_pct) + "% vs " + detail::fmt(b->second.overshoot_pct) + "%";
        }
        out.push_back(c);
    }
    return out;
}

/// Runs every sub-experiment of the report and writes its files into `run`.
inline ReportResult run_report(Run& run) {
    const auto& s = run.settings();
    ReportResult res;
    res.controllers = s.controllers;
    if (res.controllers.empty())
        for (auto k : kNamedControllers) res.controllers.emplace_back(to_string(k));
    res.freqs = s.freqs;
    for (const auto& m : s.modes) {
        const auto mode = parse_sim_mode(m);
        if (mode == SimMode::step) throw SpecError("report: modes are 'reference' and/or 'disturbance'");
        res.modes.push_back(mode);
    }

    const auto plant = resolve_plant(s);
    detail::report_plant(run, plant);

    std::vector<ControllerSpec> specs;
    std::vector<ResetStateSpace> ctrls;
    nlohmann::json spec_list = nlohmann::json::array();
    for (const auto& name : res.controllers) {
        specs.push_back(resolve_spec(s, name, plant.ss));
        ctrls.push_back(controllers::build(specs.back()));
        spec_list.push_back(detail::spec_json(specs.back()));
    }
    run.add_extra("controllers", spec_list);

    struct Task {
        std::size_t ctrl;
        enum Kind { sine, noise, step } kind;
        SimMode mode;
        double freq;
    };
    std::vector<Task> tasks;
    for (std::size_t c = 0; c < ctrls.size(); ++c) {
        for (auto m : res.modes)
            for (double f : res.freqs) tasks.push_back({c, Task::sine, m, f});
        if (s.noise)
            for (auto m : res.modes) tasks.push_back({c, Task::noise, m, 0.0});
        if (s.steps) tasks.push_back({c, Task::step, SimMode::step, 0.0});
    }

    struct Outcome {
        bool ok = false;
        std::string error;
        ErrorMetrics m;
        StepMetrics step;
        CumulativeSpectrum cpsd;
        std::vector<double> step_t, step_y;
    };
    std::vector<Outcome> outcomes(tasks.size());
    detail::parallel_for(tasks.size(), s.jobs, [&](std::size_t i) {
        const auto& t = tasks[i];
        auto& o       = outcomes[i];
        try {
            if (t.kind == Task::step) {
                const auto tr = detail::run_checked(ctrls[t.ctrl], plant.ss, sim_config(s, SimMode::step, 2.0));
                o.step        = metrics::step_metrics(tr);
                const std::size_t stride = std::max<std::size_t>(1, tr.size() / 2000);
                for (std::size_t k = 0; k < tr.size(); k += stride) {
                    o.step_t.push_back(tr.t[k]);
                    o.step_y.push_back(tr.y[k]);
                }
            } else {
                Settings local = s;
                local.signal   = t.kind == Task::sine ? "sine" : "bandnoise";
                local.freq     = t.freq;
                const auto cfg = sim_config(local, t.mode, 60.0);
                const auto tr = detail::run_checked(ctrls[t.ctrl], plant.ss, cfg);
                o.m           = metrics::rms_max(tr);
                if (t.kind == Task::noise) o.cpsd = metrics::cpsd(tr);
            }
            o.ok = true;
        } catch (const std::exception& e) {
            o.error = e.what();
        }
    });

    std::vector<metrics::MetricsRow> rows;
    std::map<SimMode, std::vector<Series>> cpsd_series;
    std::vector<Series> step_series;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& t    = tasks[i];
        const auto& o    = outcomes[i];
        const auto& name = res.controllers[t.ctrl];
        const std::string label =
            name + " " + (t.kind == Task::step ? std::string("step")
                                               : std::string(to_string(t.mode)) + " " +
                                                     (t.kind == Task::sine ? detail::freq_tag(t.freq) : "noise"));
        if (!o.ok) {
            res.failures[label] = o.error;
            run.warn("run failed: " + label + ": " + o.error);
            if (t.kind == Task::sine) res.cells.push_back({name, t.mode, t.freq, false, {}, o.error});
            continue;
        }
        switch (t.kind) {
            case Task::sine:
                res.cells.push_back({name, t.mode, t.freq, true, o.m, ""});
                rows.push_back({name, std::string(to_string(t.mode)) + "_sine", t.freq, o.m});
                break;
            case Task::noise: {
                rows.push_back({name, std::string(to_string(t.mode)) + "_noise", 0.0, o.m});
                const std::string file = "cpsd_" + std::string(to_string(t.mode)) + "_" + name + ".csv";
                run.write(file, [&](std::ostream& os) { metrics::write_cpsd_csv(os, o.cpsd); });
                Series sr{name, {}, {}};
                for (std::size_t b = 1; b < o.cpsd.freq_hz.size() && o.cpsd.freq_hz[b] <= 200.0; ++b) {
                    sr.x.push_back(o.cpsd.freq_hz[b]);
                    sr.y.push_back(o.cpsd.cumulative_power[b]);
                }
                cpsd_series[t.mode].push_back(std::move(sr));
                break;
            }
            case Task::step:
                res.steps[name] = o.step;
                step_series.push_back({name, o.step_t, o.step_y});
                break;
        }
    }

    run.write("error_table.csv", [&](std::ostream& os) {
        os << "controller";
        for (auto m : res.modes)
            for (double f : res.freqs)
                os << ',' << to_string(m) << '_' << detail::freq_tag(f) << "_rms," << to_string(m) << '_'
                   << detail::freq_tag(f) << "_max";
        os << '\n';
        for (const auto& name : res.controllers) {
            os << name;
            for (auto m : res.modes)
                for (double f : res.freqs) {
                    const auto* c = res.find(name, m, f);
                    if (c)
                        os << ',' << detail::fmt(c->m.rms) << ',' << detail::fmt(c->m.max_abs);
                    else
                        os << ",FAILED,FAILED";
                }
            os << '\n';
        }
    });
    run.write("metrics.csv", [&](std::ostream& os) { metrics::write_metrics_csv(os, rows); });
    if (s.steps)
        run.write("step_metrics.csv", [&](std::ostream& os) {
            os << "controller,overshoot_pct,settling_time_s,final_value\n";
            for (const auto& name : res.controllers) {
                auto it = res.steps.find(name);
                if (it == res.steps.end()) {
                    os << name << ",FAILED,FAILED,FAILED\n";
                    continue;
                }
                os << name << ',' << detail::fmt(it->second.overshoot_pct) << ','
                   << detail::fmt(it->second.settling_time) << ',' << detail::fmt(it->second.final_value) << '\n';
            }
        });
    run.write("margins.csv", [&](std::ostream& os) {
        os << "controller,k_p,phase_margin_deg,crossover_rad_s\n";
        for (std::size_t c = 0; c < ctrls.size(); ++c) {
            os << res.controllers[c] << ',' << detail::fmt(specs[c].k_p) << ',';
            try {
                const auto pm = controllers::phase_margin(ctrls[c], plant.ss);
                os << detail::fmt(pm.margin_deg) << ',' << detail::fmt(pm.crossover) << '\n';
            } catch (const MarginUndefined&) {
                os << "nan,nan\n";
            }
        }
    });
    if (s.svg) {
        for (auto& [mode, series] : cpsd_series)
            run.write("cpsd_" + std::string(to_string(mode)) + ".svg", [&](std::ostream& os) {
                write_svg(os, "Cumulative PSD of the error, " + std::string(to_string(mode)) + " noise",
                          "frequency [Hz]", true, {Panel{"cumulative power", series}});
            });
        if (!step_series.empty())
            run.write("step.svg", [&](std::ostream& os) {
                write_svg(os, "Step responses", "time [s]", false, {Panel{"y", step_series}});
            });
    }
    if (s.check) res.checks = trend_checks(res);
    return res;
}

inline int cmd_report(Run& run) {
    const auto res = run_report(run);
    bool ok        = res.failures.empty();
    if (run.settings().check) {
        nlohmann::json checks = nlohmann::json::array();
        for (const auto& c : res.checks) {
            run.log() << (c.pass ? "PASS " : "FAIL ") << c.id << " (" << c.detail << ")\n";
            checks.push_back({{"id", c.id}, {"pass", c.pass}, {"detail", c.detail}});
            ok = ok && c.pass;
        }
        run.add_extra("checks", checks);
    }
    return ok ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- fit-plant

inline int cmd_fit_plant(Run& run) {
    const auto& s = run.settings();
    std::string path = s.frf;
    if (path.empty() && s.plant.rfind("frf:", 0) == 0) path = s.plant.substr(4);
    if (path.empty()) throw SpecError("fit-plant: give --frf <path> or --plant frf:<path>");
    const auto data = plant::load_frf(path);
    for (const auto& w : data.warnings) run.warn(w);
    if (data.records.empty()) throw FitError("fit-plant: FRF file has no records");
    const auto fit = plant::fit_second_order(data.records);
    for (const auto& w : fit.warnings) run.warn(w);

    std::vector<double> f;
    for (const auto& r : data.records) f.push_back(r.freq_hz);
    run.write("fit_frf.csv", [&](std::ostream& o) { plant::write_frf(o, plant::sample_frf(fit.model.state_space(), f)); });
    run.write("plant_fit.ini", [&](std::ostream& o) {
        o << "[plant]\nm=" << detail::fmt(fit.model.m) << "\nc=" << detail::fmt(fit.model.c)
          << "\nk=" << detail::fmt(fit.model.k) << "\ngain=" << detail::fmt(fit.model.gain) << "\nactuator_pole=0\n";
    });
    run.add_extra("fit", {{"m", fit.model.m},
                          {"c", fit.model.c},
                          {"k", fit.model.k},
                          {"gain", fit.model.gain},
                          {"residual", fit.residual}});
    run.log() << "m=" << fit.model.m << " c=" << fit.model.c << " k=" << fit.model.k << " residual=" << fit.residual
              << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- dispatch

/// Runs `command` and always writes a manifest. Usage problems map to exit 2.
inline int execute(const std::string& command, const Settings& settings, const fs::path& out, std::ostream& log) {
    Run run(command, settings, out, log);
    int code = kExitFailure;
    try {
        try {
            (void)parse_discretization(settings.discretization);
        } catch (const ParameterError& e) {
            throw SpecError(e.what());
        }
        if (command == "bode")
            code = cmd_bode(run, false);
        else if (command == "hosidf")
            code = cmd_bode(run, true);
        else if (command == "simulate")
            code = cmd_simulate(run);
        else if (command == "step")
            code = cmd_step(run);
        else if (command == "report")
            code = cmd_report(run);
        else if (command == "fit-plant")
            code = cmd_fit_plant(run);
        else
            throw SpecError("unknown command '" + command + "'");
    } catch (const SpecError& e) {
        log << "error: " << e.what() << '\n';
        code = kExitUsage;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        code = kExitFailure;
    }
    run.finish(code);
    return code;
}

/// Re-executes the command recorded in a manifest with its config snapshot.
inline int replay(const fs::path& manifest, const fs::path& out, std::ostream& log) {
    std::ifstream in(manifest);
    if (!in) throw Error("replay: cannot open '" + manifest.string() + "'");
    const auto j = nlohmann::json::parse(in);
    Settings s;
    std::istringstream ini(j.at("config_ini").get<std::string>());
    apply_ini(s, ini);
    return execute(j.at("command").get<std::string>(), s, out, log);
}

}  // namespace resetloop::cli
