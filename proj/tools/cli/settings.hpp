#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <resetloop/resetloop.hpp>

namespace resetloop::cli {

/// Every knob a command reads. Defaults < config file < command-line flags.
struct Settings {
    // [run]
    std::string plant      = "default";
    double fs              = 10000.0;
    std::optional<double> duration;  // per-command default when unset
    std::uint64_t seed     = 1;
    double transient       = 5.0;
    double amplitude       = 1.0;
    double f_lo            = 0.5;
    double f_hi            = 30.0;
    int jobs               = 1;
    bool check             = false;
    bool svg               = false;
    std::string discretization = "tustin";  // controller: tustin | zoh
    // [design]
    double w_c = 942.48;
    bool tune  = true;
    // [bode]
    std::vector<std::string> controllers;
    std::vector<int> harmonics;
    double w_min   = 1.0;
    double w_max   = 1e5;
    int points     = 400;
    std::string loop = "open";  // open | controller
    // [simulate]
    std::string controller = "PID";
    std::string mode       = "disturbance";
    std::string signal     = "sine";
    double freq            = 10.0;
    // [report]
    std::vector<double> freqs{0.5, 10.0, 20.0};
    std::vector<std::string> modes{"reference", "disturbance"};
    bool noise = true;
    bool steps = true;
    // [fit]
    std::string frf;
    // [plant]
    std::optional<double> m, c, k, gain, actuator_pole;
    // [<controller name>] key -> value
    std::map<std::string, std::map<std::string, std::string>> overrides;
};

namespace detail {

inline double to_double(const std::string& s, const std::string& key) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ParseError("config: '" + key + "' expects a number, got '" + s + "'", 0);
    return v;
}

inline bool to_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ParseError("config: '" + key + "' expects true/false, got '" + s + "'", 0);
}

template <class T>
std::vector<T> split(const std::string& s, const std::string& key) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        item = item.substr(b, e - b + 1);
        if constexpr (std::is_same_v<T, std::string>)
            out.push_back(item);
        else if constexpr (std::is_same_v<T, int>)
            out.push_back(static_cast<int>(to_double(item, key)));
        else
            out.push_back(to_double(item, key));
    }
    return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        if constexpr (std::is_same_v<T, std::string>)
            s += v[i];
        else if constexpr (std::is_same_v<T, int>)
            s += std::to_string(v[i]);
        else
            s += plant::detail::format_double(v[i]);
    }
    return s;
}

inline std::string num(double v) { return plant::detail::format_double(v); }

// Greek spellings accepted alongside the ASCII keys.
inline std::string canonical_key(const std::string& k) {
    static const std::map<std::string, std::string> alias{
        {"ω_i", "w_i"},   {"ω_d", "w_d"},   {"ω_t", "w_t"},     {"ω_f", "w_f"},           {"ω_i2", "w_i2"},
        {"ω_bp", "w_bp"}, {"ω_r", "w_r"},   {"ω_rα", "w_ra"},   {"ω_ra", "w_ra"},         {"ω_f_cglp", "w_f_cglp"},
        {"α", "alpha"},   {"ω_c", "w_c"},   {"ω_min", "w_min"}, {"ω_max", "w_max"}};
    auto it = alias.find(k);
    return it == alias.end() ? k : it->second;
}

inline bool is_controller_section(const std::string& s) {
    if (s == "custom" || s == "CI") return true;
    for (auto k : kNamedControllers)
        if (s == to_string(k)) return true;
    return false;
}

}  // namespace detail

/// Applies an INI document on top of `s`. Unknown sections or keys are errors.
inline void apply_ini(Settings& s, std::istream& in) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError("config: " + e.message(), e.line());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) throw ParseError("config: key '" + section + "' outside a section", 0);
        for (const auto& [raw_key, node] : body) {
            const std::string key = detail::canonical_key(raw_key);
            const std::string val = node.data();
            const std::string where = section + "." + raw_key;
            if (section == "run") {
                if (key == "plant") s.plant = val;
                else if (key == "fs") s.fs = detail::to_double(val, where);
                else if (key == "duration") s.duration = detail::to_double(val, where);
                else if (key == "seed") s.seed = static_cast<std::uint64_t>(detail::to_double(val, where));
                else if (key == "transient_discard") s.transient = detail::to_double(val, where);
                else if (key == "amplitude") s.amplitude = detail::to_double(val, where);
                else if (key == "f_lo") s.f_lo = detail::to_double(val, where);
                else if (key == "f_hi") s.f_hi = detail::to_double(val, where);
                else if (key == "jobs") s.jobs = static_cast<int>(detail::to_double(val, where));
                else if (key == "check") s.check = detail::to_bool(val, where);
                else if (key == "svg") s.svg = detail::to_bool(val, where);
                else if (key == "discretization") s.discretization = val;
                else throw ParseError("config: unknown key '" + where + "'", 0);
            } else if (section == "design") {
                if (key == "w_c") s.w_c = detail::to_double(val, where);
                else if (key == "tune") s.tune = detail::to_bool(val, where);
                else throw ParseError("config: unknown key '" + where + "'", 0);
            } else if (section == "bode") {
                if (key == "controllers") s.controllers = detail::split<std::string>(val, where);
                else if (key == "harmonics") s.harmonics = detail::split<int>(val, where);
                else if (key == "w_min") s.w_min = detail::to_double(val, where);
                else if (key == "w_max") s.w_max = detail::to_double(val, where);
                else if (key == "points") s.points = static_cast<int>(detail::to_double(val, where));
                else if (key == "loop") s.loop = val;
                else throw ParseError("config: unknown key '" + where + "'", 0);
            } else if (section == "simulate") {
                if (key == "controller") s.controller = val;
                else if (key == "mode") s.mode = val;
                else if (key == "signal") s.signal = val;
                else if (key == "freq") s.freq = detail::to_double(val, where);
                else throw ParseError("config: unknown key '" + where + "'", 0);
            } else if (section == "report") {
                if (key == "freqs") s.freqs = detail::split<double>(val, where);
                else if (key == "modes") s.modes = detail::split<std::string>(val, where);
                else if (key == "controllers") s.controllers = detail::split<std::string>(val, where);
                else if (key == "noise") s.noise = detail::to_bool(val, where);
                else if (key == "steps") s.steps = detail::to_bool(val, where);
                else throw ParseError("config: unknown key '" + where + "'", 0);
            } else if (section == "fit") {
                if (key == "frf") s.frf = val;
                else throw ParseError("config: unknown key '" + where + "'", 0);
            } else if (section == "plant") {
                if (key == "m") s.m = detail::to_double(val, where);
                else if (key == "c") s.c = detail::to_double(val, where);
                else if (key == "k") s.k = detail::to_double(val, where);
                else if (key == "gain") s.gain = detail::to_double(val, where);
                else if (key == "actuator_pole") s.actuator_pole = detail::to_double(val, where);
                else throw ParseError("config: unknown key '" + where + "'", 0);
            } else if (detail::is_controller_section(section)) {
                s.overrides[section][key] = val;
            } else {
                throw ParseError("config: unknown section [" + section + "]", 0);
            }
        }
    }
}

inline void load_ini_file(Settings& s, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("config: cannot open '" + path + "'");
    apply_ini(s, in);
}

/// Complete INI rendering; apply_ini(Settings{}, to_ini(s)) reproduces s.
inline std::string to_ini(const Settings& s) {
    std::ostringstream o;
    o << "[run]\nplant=" << s.plant << "\nfs=" << detail::num(s.fs) << '\n';
    if (s.duration) o << "duration=" << detail::num(*s.duration) << '\n';
    o << "seed=" << s.seed << "\ntransient_discard=" << detail::num(s.transient)
      << "\namplitude=" << detail::num(s.amplitude) << "\nf_lo=" << detail::num(s.f_lo)
      << "\nf_hi=" << detail::num(s.f_hi) << "\ncheck=" << (s.check ? "true" : "false")
      << "\nsvg=" << (s.svg ? "true" : "false") << "\ndiscretization=" << s.discretization << "\n\n";
    o << "[design]\nw_c=" << detail::num(s.w_c) << "\ntune=" << (s.tune ? "true" : "false") << "\n\n";
    o << "[bode]\ncontrollers=" << detail::join(s.controllers) << "\nharmonics=" << detail::join(s.harmonics)
      << "\nw_min=" << detail::num(s.w_min) << "\nw_max=" << detail::num(s.w_max) << "\npoints=" << s.points
      << "\nloop=" << s.loop << "\n\n";
    o << "[simulate]\ncontroller=" << s.controller << "\nmode=" << s.mode << "\nsignal=" << s.signal
      << "\nfreq=" << detail::num(s.freq) << "\n\n";
    o << "[report]\nfreqs=" << detail::join(s.freqs) << "\nmodes=" << detail::join(s.modes)
      << "\nnoise=" << (s.noise ? "true" : "false") << "\nsteps=" << (s.steps ? "true" : "false") << "\n\n";
    if (!s.frf.empty()) o << "[fit]\nfrf=" << s.frf << "\n\n";
    if (s.m || s.c || s.k || s.gain || s.actuator_pole) {
        o << "[plant]\n";
        if (s.m) o << "m=" << detail::num(*s.m) << '\n';
        if (s.c) o << "c=" << detail::num(*s.c) << '\n';
        if (s.k) o << "k=" << detail::num(*s.k) << '\n';
        if (s.gain) o << "gain=" << detail::num(*s.gain) << '\n';
        if (s.actuator_pole) o << "actuator_pole=" << detail::num(*s.actuator_pole) << '\n';
        o << '\n';
    }
    for (const auto& [name, kv] : s.overrides) {
        o << '[' << name << "]\n";
        for (const auto& [k, v] : kv) o << k << '=' << v << '\n';
        o << '\n';
    }
    return o.str();
}

struct ResolvedPlant {
    PlantModel model;
    StateSpace ss;
    std::vector<std::string> warnings;
    std::optional<double> fit_residual;
};

/// `default` or `frf:<path>` (second-order fit), then [plant] field overrides.
inline ResolvedPlant resolve_plant(const Settings& s) {
    ResolvedPlant r;
    if (s.plant == "default") {
        r.model = plant::default_stage();
    } else if (s.plant.rfind("frf:", 0) == 0) {
        const auto data = plant::load_frf(s.plant.substr(4));
        r.warnings      = data.warnings;
        if (data.records.empty()) throw FitError("plant: FRF file has no records");
        auto fit       = plant::fit_second_order(data.records);
        r.model        = fit.model;
        r.fit_residual = fit.residual;
        r.warnings.insert(r.warnings.end(), fit.warnings.begin(), fit.warnings.end());
    } else {
        throw SpecError("plant: expected 'default' or 'frf:<path>', got '" + s.plant + "'");
    }
    if (s.m) r.model.m = *s.m;
    if (s.c) r.model.c = *s.c;
    if (s.k) r.model.k = *s.k;
    if (s.gain) r.model.gain = *s.gain;
    if (s.actuator_pole) r.model.actuator_pole = *s.actuator_pole;
    r.ss = r.model.state_space();
    return r;
}

/// Analysis-only elements accepted by bode/hosidf besides controller names.
inline bool is_element_name(const std::string& n) { return n == "CI" || n == "FORE" || n == "CGLP"; }

inline std::string valid_bode_names() { return valid_controller_names() + ", CI, FORE, CGLP"; }

/// Controller spec from name + overrides; k_p retuned for crossover w_c unless tuning is off or k_p is given.
inline ControllerSpec resolve_spec(const Settings& s, const std::string& name, const StateSpace& plant) {
    ControllerSpec spec = ControllerSpec::preset(parse_controller_kind(name));
    spec.w_c            = s.w_c;
    bool explicit_kp    = false;
    if (auto it = s.overrides.find(name); it != s.overrides.end()) {
        for (const auto& [key, val] : it->second) {
            const std::string where = name + "." + key;
            if (key == "k_p") {
                spec.k_p    = detail::to_double(val, where);
                explicit_kp = true;
            } else if (key == "w_i") spec.w_i = detail::to_double(val, where);
            else if (key == "w_d") spec.w_d = detail::to_double(val, where);
            else if (key == "w_t") spec.w_t = detail::to_double(val, where);
            else if (key == "w_f") spec.w_f = detail::to_double(val, where);
            else if (key == "w_i2") spec.w_i2 = detail::to_double(val, where);
            else if (key == "w_bp") spec.w_bp = detail::to_double(val, where);
            else if (key == "w_r") spec.w_r = detail::to_double(val, where);
            else if (key == "w_ra") spec.w_ra = detail::to_double(val, where);
            else if (key == "w_f_cglp") spec.w_f_cglp = detail::to_double(val, where);
            else if (key == "alpha") spec.alpha = detail::to_double(val, where);
            else if (key == "cglp_lead") spec.cglp_lead = detail::to_double(val, where);
            else if (key == "w_c") spec.w_c = detail::to_double(val, where);
            else if (key == "second_integrator") {
                if (val == "none") spec.second_integrator = SecondIntegrator::none;
                else if (val == "linear") spec.second_integrator = SecondIntegrator::linear;
                else if (val == "reset") spec.second_integrator = SecondIntegrator::reset;
                else throw SpecError("config: " + where + " expects none|linear|reset");
            } else if (key == "cglp") spec.cglp = detail::to_bool(val, where);
            else throw SpecError("config: unknown controller key '" + where + "'");
        }
    }
    if (s.tune && !explicit_kp) spec = controllers::tuned(spec, plant);
    return spec;
}

/// Standalone analysis element (CI with w_i, FORE with w_ra, CGLP designed or given).
inline ResetStateSpace resolve_element(const Settings& s, const std::string& name) {
    auto get = [&](const char* key, double def) {
        if (auto it = s.overrides.find(name); it != s.overrides.end())
            if (auto kv = it->second.find(key); kv != it->second.end())
                return detail::to_double(kv->second, name + "." + key);
        return def;
    };
    if (name == "CI") return reset::make_clegg(get("w_i", 1.0));
    if (name == "FORE") return reset::make_fore(get("w_ra", 1.0));
    if (name == "CGLP") {
        const ControllerSpec defaults;
        const double alpha = get("alpha", defaults.alpha), w_f = get("w_f_cglp", defaults.w_f_cglp);
        const auto d       = controllers::design_cglp(get("cglp_lead", defaults.cglp_lead), s.w_c, w_f, alpha);
        const double w_r   = get("w_r", d.w_r);
        return controllers::make_cglp(w_r, get("w_ra", w_r / alpha), w_f);
    }
    throw SpecError("unknown element '" + name + "'");
}

}  // namespace resetloop::cli
