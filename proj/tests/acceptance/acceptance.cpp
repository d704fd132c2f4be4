// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <thread>

#include <json.hpp>

#include "cli/commands.hpp"
#include "oracles.hpp"

using namespace resetloop;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double rel(Complex a, Complex b) { return std::abs(a - b) / std::abs(b); }
double phase_diff_deg(Complex a, Complex b) { return std::abs(oracle::deg(std::arg(a / b))); }

const StateSpace& stage() {
    static const StateSpace p = plant::default_stage().state_space();
    return p;
}

ControllerSpec tuned_spec(ControllerKind k) { return controllers::tuned(ControllerSpec::preset(k), stage()); }

std::vector<ControllerKind> reset_kinds() {
    std::vector<ControllerKind> out;
    for (auto k : kNamedControllers)
        if (controllers::build(ControllerSpec::preset(k)).has_reset()) out.push_back(k);
    return out;
}

std::string fmt(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4g", v);
    return b;
}

// -------------------------------------------------------------------------

Outcome clegg_df() {
    const auto ci = reset::make_clegg(1.0);
    double worst_mag = 0, worst_ph = 0;
    for (double w : harmonics::logspace(0.1, 1000.0, 50)) {
        const Complex h = harmonics::df(ci, w);
        worst_mag       = std::max(worst_mag, std::abs(std::abs(h) * w / 1.6186 - 1.0));
        worst_ph        = std::max(worst_ph, std::abs(oracle::deg(std::arg(h)) + 38.15));
    }
    return {worst_mag < 1e-3 && worst_ph < 0.05,
            "max rel mag err " + fmt(worst_mag) + ", max phase err " + fmt(worst_ph) + " deg"};
}

Outcome hosidf_structure() {
    const auto ci = reset::make_clegg(1.0);
    double even = 0, h3 = 0;
    bool decreasing = true;
    std::vector<ResetStateSpace> systems{ci};
    for (auto k : reset_kinds()) systems.push_back(controllers::reset_part(ControllerSpec::preset(k)));
    for (double w : harmonics::logspace(0.1, 1000.0, 50)) {
        for (const auto& s : systems)
            for (int n : {2, 4, 6, 8}) even = std::max(even, std::abs(harmonics::hosidf(s, w, n)));
        h3 = std::max(h3, rel(harmonics::hosidf(ci, w, 3), Complex(4.0 / (3.0 * oracle::kPi * w), 0.0)));
        double prev = std::abs(harmonics::df(ci, w));
        for (int n : {3, 5, 7, 9}) {
            const double m = std::abs(harmonics::hosidf(ci, w, n));
            decreasing     = decreasing && m < prev;
            prev           = m;
        }
    }
    return {even == 0.0 && h3 < 1e-6 && decreasing, "max |even| " + fmt(even) + ", CI H3 rel err " + fmt(h3) +
                                                        (decreasing ? ", |H1|>|H3|>...>|H9|" : ", NOT decreasing")};
}

Outcome linear_degeneration() {
    double df_err = 0, hn = 0;
    std::size_t skipped = 0;
    const auto grid     = harmonics::logspace(1.0, 1e5, 400);
    for (auto k : kNamedControllers) {
        const auto spec = ControllerSpec::preset(k);
        const auto lin  = controllers::build(spec).linearized();
        const auto head = controllers::reset_part(spec).base();
        const auto tail = controllers::linear_tail(spec);
        for (double w : grid) {
            const Complex want = lti::freq_response(head, w) * lti::freq_response(tail, w);
            Complex got;
            try {
                got = harmonics::df(lin, w);
            } catch (const SingularityError&) {
                ++skipped;
                continue;
            }
            df_err = std::max(df_err, rel(got, want));
            for (int n : {2, 3, 5, 7}) hn = std::max(hn, std::abs(harmonics::hosidf(lin, w, n)));
        }
    }
    return {df_err < 1e-9 && hn < 1e-12 && skipped == 0,
            "max rel DF err " + fmt(df_err) + ", max |H_n>=2| " + fmt(hn) + ", singular points " +
                std::to_string(skipped)};
}

Outcome dft_oracle() {
    std::vector<std::pair<std::string, ResetStateSpace>> systems{
        {"CI", reset::make_clegg(2 * oracle::kPi * 5)},
        {"FORE", reset::make_fore(2 * oracle::kPi * 5)},
        {"RLPF", reset::make_reset_filter(FilterKind::lpf, 2 * oracle::kPi * 5, true)},
        {"RHPF", reset::make_reset_filter(FilterKind::hpf, 2 * oracle::kPi * 5, true)}};
    for (auto k : reset_kinds())
        systems.emplace_back(std::string(to_string(k)), controllers::reset_part(tuned_spec(k)));
    const std::array<int, 2> orders{1, 3};
    double worst_mag = 0, worst_ph = 0;
    std::string where;
    for (const auto& [name, s] : systems)
        for (double f : {0.5, 10.0, 20.0}) {
            const double w = 2 * oracle::kPi * f;
            const auto got = oracle::dft_harmonics(s, f, 10000.0, orders);
            for (std::size_t i = 0; i < 2; ++i) {
                const Complex want = harmonics::harmonic(s, w, orders[i]);
                const double m = rel(got[i], want), p = phase_diff_deg(got[i], want);
                if (m > worst_mag || p > worst_ph) where = name + " " + fmt(f) + " Hz H" + std::to_string(orders[i]);
                worst_mag = std::max(worst_mag, m);
                worst_ph  = std::max(worst_ph, p);
            }
        }
    return {worst_mag < 0.02 && worst_ph < 1.5, std::to_string(systems.size()) + " systems, worst mag " +
                                                    fmt(100 * worst_mag) + "%, worst phase " + fmt(worst_ph) +
                                                    " deg (last worst at " + where + ")"};
}

Outcome margins() {
    auto pm = [](ControllerKind k) { return controllers::phase_margin(controllers::build(tuned_spec(k)), stage()); };
    const auto pid = pm(ControllerKind::PID), pi2d = pm(ControllerKind::PI2D), cg = pm(ControllerKind::CGLP_PI2D);
    const double loss = oracle::deg(std::atan(2 * oracle::kPi * 30.0 / 942.48));
    const bool ok     = std::abs(pid.margin_deg - 30.0) <= 0.5 &&
                    std::abs((pid.margin_deg - pi2d.margin_deg) - loss) < 1e-3 && std::abs(cg.margin_deg - 30.0) <= 2.0;
    return {ok, "PID " + fmt(pid.margin_deg) + ", PI2D " + fmt(pi2d.margin_deg) + " (loss " +
                    fmt(pid.margin_deg - pi2d.margin_deg) + " vs " + fmt(loss) + "), CGLP_PI2D " +
                    fmt(cg.margin_deg) + " deg"};
}

Outcome cglp_design() {
    const ControllerSpec d;
    const auto des = controllers::design_cglp(11.0, 942.48, d.w_f_cglp, d.alpha);
    const auto cg  = controllers::make_cglp(des.w_r, des.w_ra, d.w_f_cglp);
    double lo = 1e9, hi = -1e9;
    for (double w : harmonics::logspace(94.0, 942.0, 60)) {
        const double db = 20 * std::log10(std::abs(harmonics::df(cg, w)));
        lo              = std::min(lo, db);
        hi              = std::max(hi, db);
    }
    const double dev = des.w_r / 1317.0 - 1.0;
    return {std::abs(dev) <= 0.25 && lo >= -1.0 && hi <= 1.0,
            "w_r " + fmt(des.w_r) + " rad/s (" + fmt(100 * dev) + "%), |DF| in [" + fmt(lo) + ", " + fmt(hi) + "] dB"};
}

Outcome sim_fidelity() {
    const auto spec = tuned_spec(ControllerKind::PID);
    const auto ctrl = controllers::build(spec);
    SimConfig cfg;
    cfg.duration          = 4.0;
    cfg.transient_discard = 1.0;
    cfg.signal.freq_hz    = 10.0;
    const auto tr         = simulate::run(ctrl, stage(), cfg);
    const double w        = 2 * oracle::kPi * 10.0;
    const Complex p = oracle::default_plant(w), c = oracle::pid(w, spec.k_p, spec.w_i, spec.w_d, spec.w_t, spec.w_f);
    const double ratio = std::abs(oracle::tone(tr.e, 10.0, cfg.fs, 20)) / std::abs(p / (1.0 + p * c));
    const double a     = metrics::rms_max(tr).rms;
    cfg.fs             = 20000.0;
    const double b     = metrics::rms_max(simulate::run(ctrl, stage(), cfg)).rms;
    const double drift = std::abs(b / a - 1.0);
    return {std::abs(ratio - 1.0) < 0.01 && drift < 1e-3,
            "amplitude / analytic " + fmt(ratio) + ", rms change at 2 fs " + fmt(100 * drift) + "%"};
}

fs::path g_tmp;

int run_report(const fs::path& out, std::string& log_text) {
    cli::Settings s;
    s.check = true;
    s.jobs  = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::ostringstream log;
    const int code = cli::execute("report", s, out, log);
    log_text       = log.str();
    return code;
}

Outcome table_trends() {
    std::string log;
    const int code = run_report(g_tmp / "report_a", log);
    std::ifstream in(g_tmp / "report_a" / "manifest.json");
    const auto m = nlohmann::json::parse(in);
    Outcome o{code == 0, "exit " + std::to_string(code)};
    for (const auto& c : m.value("checks", nlohmann::json::array())) {
        std::cout << "      " << (c["pass"].get<bool>() ? "pass " : "FAIL ") << c["id"].get<std::string>() << ": "
                  << c["detail"].get<std::string>() << '\n';
        o.pass = o.pass && c["pass"].get<bool>();
    }
    if (m["warnings"].size()) o.detail += ", " + std::to_string(m["warnings"].size()) + " warnings";
    return o;
}

Outcome metric_units() {
    std::vector<double> x(100000);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = 2.5 * std::sin(2 * oracle::kPi * 13.0 * static_cast<double>(k) / 1e4);
    const double sine_err = std::abs(metrics::rms_max(x).rms / (2.5 / std::sqrt(2.0)) - 1.0);

    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> n(1u << 18);
    for (auto& v : n) v = nd(rng);
    const double var     = std::pow(metrics::rms_max(n).rms, 2);
    const double parsval = std::abs(metrics::cpsd(n, 1000.0, 4096).cumulative_power.back() / var - 1.0);

    const auto sys = lti::tf_to_ss({{400.0}, {1.0, 12.0, 400.0}});  // zeta 0.3, wn 20
    const auto d   = lti::zoh_discretize(sys, 1e4);
    std::vector<double> t, y;
    Vector st = Vector::Zero(2);
    for (int k = 0; k < 30000; ++k) {
        t.push_back(k / 1e4);
        y.push_back(d.C.dot(st));
        st = d.Ad * st + d.Bd;
    }
    const double os = metrics::step_metrics(t, y).overshoot_pct;
    return {sine_err < 1e-3 && parsval < 0.05 && std::abs(os - 37.2) <= 0.5,
            "sine rms err " + fmt(100 * sine_err) + "%, Parseval err " + fmt(100 * parsval) + "%, overshoot " +
                fmt(os) + "%"};
}

Outcome determinism() {
    std::string log;
    const auto a = g_tmp / "report_a", b = g_tmp / "report_b";
    if (!fs::exists(a / "manifest.json")) (void)run_report(a, log);
    (void)run_report(b, log);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    auto ma = nlohmann::json::parse(slurp(a / "manifest.json")), mb = nlohmann::json::parse(slurp(b / "manifest.json"));
    ma.erase("timestamp");
    mb.erase("timestamp");
    std::size_t compared = 0, differ = 0;
    for (const auto& f : ma["outputs"]) {
        ++compared;
        if (slurp(a / f.get<std::string>()) != slurp(b / f.get<std::string>())) ++differ;
    }
    const bool same_manifest = ma == mb;
    return {differ == 0 && same_manifest && compared > 0,
            std::to_string(compared) + " files compared, " + std::to_string(differ) + " differ, manifest " +
                (same_manifest ? "identical" : "DIFFERS") + " (timestamp excluded)"};
}

}  // namespace

int main() {
    g_tmp = fs::temp_directory_path() / ("resetloop_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(g_tmp);

    struct Criterion {
        int id;
        const char* name;
        double budget_s;  // 0 = none
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> all{
        {1, "Clegg integrator DF", 1.0, clegg_df},
        {2, "HOSIDF structure", 0.0, hosidf_structure},
        {3, "linear degeneration", 0.0, linear_degeneration},
        {4, "DF/HOSIDF vs time-domain oracle", 30.0, dft_oracle},
        {5, "phase-margin arithmetic", 0.0, margins},
        {6, "CgLp design", 0.0, cglp_design},
        {7, "simulation fidelity", 0.0, sim_fidelity},
        {8, "report trends (report --check)", 300.0, table_trends},
        {9, "metrics units", 0.0, metric_units},
        {10, "report determinism", 0.0, determinism},
    };

    int failed = 0;
    for (const auto& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0 && dt > c.budget_s) {
            o.pass = false;
            o.detail += ", over time budget " + fmt(c.budget_s) + " s";
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << " [" << fmt(dt) << " s] "
                  << o.detail << std::endl;
    }
    std::error_code ec;
    fs::remove_all(g_tmp, ec);
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << '\n';
    return failed ? 1 : 0;
}
