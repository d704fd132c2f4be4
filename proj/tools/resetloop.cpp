#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cli/commands.hpp"

using namespace resetloop;

namespace {

// Raw flag values; only those present on the command line override the config.
struct Flags {
    std::string config, plant, out, mode, signal, controller, loop, frf, discretization;
    double fs = 0, duration = 0, w_c = 0, transient = 0, amplitude = 0, f_lo = 0, f_hi = 0, freq = 0;
    double w_min = 0, w_max = 0;
    std::uint64_t seed = 0;
    int jobs = 1, points = 0;
    std::vector<std::string> controllers, modes;
    std::vector<int> harmonics;
    std::vector<double> freqs;
    std::string manifest;
};

void add_common(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "INI config file (flags override it)");
    app->add_option("--plant", f.plant, "default | frf:<path>");
    app->add_option("--fs", f.fs, "sample rate [Hz]");
    app->add_option("--duration", f.duration, "simulated time [s]");
    app->add_option("--seed", f.seed, "noise seed");
    app->add_option("--out", f.out, "output directory (default $RESETLOOP_OUT or ./resetloop_out)");
    app->add_flag("--svg", "also write SVG plots");
    app->add_option("--jobs", f.jobs, "concurrent sub-runs")->check(CLI::PositiveNumber);
    app->add_flag("--check", "evaluate ordering assertions (report)");
    app->add_option("--w-c", f.w_c, "design crossover [rad/s]");
    app->add_flag("--no-tune", "keep configured k_p instead of tuning to the crossover");
    app->add_option("--transient", f.transient, "transient discard [s]");
    app->add_option("--amplitude", f.amplitude, "sine peak / noise RMS / step height");
    app->add_option("--f-lo", f.f_lo, "noise band lower edge [Hz]");
    app->add_option("--f-hi", f.f_hi, "noise band upper edge [Hz]");
    app->add_option("--discretization", f.discretization, "controller discretization: tustin | zoh");
}

void add_bode(CLI::App* app, Flags& f) {
    app->add_option("--controllers", f.controllers, "comma-separated names")->delimiter(',');
    app->add_option("--harmonics", f.harmonics, "comma-separated orders")->delimiter(',');
    app->add_option("--w-min", f.w_min, "lowest frequency [rad/s]");
    app->add_option("--w-max", f.w_max, "highest frequency [rad/s]");
    app->add_option("--points", f.points, "log-spaced points")->check(CLI::Range(2, 1000000));
    app->add_option("--loop", f.loop, "open | controller");
}

cli::Settings settings_for(CLI::App* app, const Flags& f) {
    cli::Settings s;
    if (app->count("--config")) cli::load_ini_file(s, f.config);
    auto given = [&](const char* name) { return app->get_option_no_throw(name) && app->count(name) > 0; };
    if (given("--plant")) s.plant = f.plant;
    if (given("--fs")) s.fs = f.fs;
    if (given("--duration")) s.duration = f.duration;
    if (given("--seed")) s.seed = f.seed;
    if (given("--svg")) s.svg = true;
    if (given("--jobs")) s.jobs = f.jobs;
    if (given("--check")) s.check = true;
    if (given("--w-c")) s.w_c = f.w_c;
    if (given("--no-tune")) s.tune = false;
    if (given("--transient")) s.transient = f.transient;
    if (given("--amplitude")) s.amplitude = f.amplitude;
    if (given("--f-lo")) s.f_lo = f.f_lo;
    if (given("--f-hi")) s.f_hi = f.f_hi;
    if (given("--discretization")) s.discretization = f.discretization;
    if (given("--controllers")) s.controllers = f.controllers;
    if (given("--harmonics")) s.harmonics = f.harmonics;
    if (given("--w-min")) s.w_min = f.w_min;
    if (given("--w-max")) s.w_max = f.w_max;
    if (given("--points")) s.points = f.points;
    if (given("--loop")) s.loop = f.loop;
    if (given("--controller")) s.controller = f.controller;
    if (given("--mode")) s.mode = f.mode;
    if (given("--signal")) s.signal = f.signal;
    if (given("--freq")) s.freq = f.freq;
    if (given("--freqs")) s.freqs = f.freqs;
    if (given("--modes")) s.modes = f.modes;
    if (given("--no-noise")) s.noise = false;
    if (given("--no-steps")) s.steps = false;
    if (given("--frf")) s.frf = f.frf;
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reset-control analysis and simulation toolkit"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    Flags f;

    auto* bode = app.add_subcommand("bode", "harmonic frequency responses (DF for n = 1)");
    auto* hosidf = app.add_subcommand("hosidf", "higher-order harmonics only (n >= 2, default 3)");
    for (auto* a : {bode, hosidf}) {
        add_common(a, f);
        add_bode(a, f);
    }

    auto* sim = app.add_subcommand("simulate", "closed-loop run with one controller");
    add_common(sim, f);
    sim->add_option("--controller", f.controller, "controller name");
    sim->add_option("--mode", f.mode, "disturbance | reference | step");
    sim->add_option("--signal", f.signal, "sine | noise");
    sim->add_option("--freq", f.freq, "sine frequency [Hz]");

    auto* step = app.add_subcommand("step", "reference step response");
    add_common(step, f);
    step->add_option("--controller", f.controller, "controller name");

    auto* report = app.add_subcommand("report", "controller x scenario metric matrix");
    add_common(report, f);
    report->add_option("--controllers", f.controllers, "comma-separated names")->delimiter(',');
    report->add_option("--freqs", f.freqs, "sine frequencies [Hz]")->delimiter(',');
    report->add_option("--modes", f.modes, "reference,disturbance")->delimiter(',');
    report->add_flag("--no-noise", "skip band-limited noise runs");
    report->add_flag("--no-steps", "skip step responses");

    auto* fit = app.add_subcommand("fit-plant", "second-order fit of an FRF CSV");
    add_common(fit, f);
    fit->add_option("--frf", f.frf, "FRF CSV (freq_hz,mag_db,phase_deg)");

    auto* rep = app.add_subcommand("replay", "re-run the command recorded in a manifest");
    rep->add_option("manifest", f.manifest, "manifest.json")->required();
    rep->add_option("--out", f.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kExitUsage;
    }

    try {
        CLI::App* cmd = app.get_subcommands().front();
        std::optional<std::string> out;
        if (cmd->count("--out")) out = f.out;
        const auto out_dir = cli::resolve_out_dir(out);
        if (cmd == rep) return cli::replay(f.manifest, out_dir, std::cerr);
        return cli::execute(cmd->get_name(), settings_for(cmd, f), out_dir, std::cerr);
    } catch (const SpecError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kExitFailure;
    }
}
