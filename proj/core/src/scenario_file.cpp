#include "imexsim/scenario_file.hpp"

#include "imexsim/errors.hpp"

#include <yaml-cpp/yaml.h>

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace imexsim {

namespace {

const std::map<std::string, Real, std::less<>>& si_prefixes() {
    static const std::map<std::string, Real, std::less<>> p{
        {"f", 1e-15}, {"p", 1e-12}, {"n", 1e-9}, {"u", 1e-6}, {"\xC2\xB5", 1e-6}, {"m", 1e-3},
        {"k", 1e3},   {"K", 1e3},   {"M", 1e6},  {"meg", 1e6}, {"G", 1e9},
    };
    return p;
}

bool is_unit(std::string_view u) {
    static const std::set<std::string, std::less<>> units{"H", "F", "V", "A", "s", "Hz", "ohm", "Ohm", "\xCE\xA9", "W", "rad"};
    return u.empty() || units.count(u) > 0;
}

std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

std::string where(const YAML::Node& node) {
    const auto m = node.Mark();
    if (m.line < 0) return "";
    return " (line " + std::to_string(m.line + 1) + ")";
}

void check_keys(const YAML::Node& node, std::string_view section, std::initializer_list<std::string_view> allowed) {
    if (!node) return;
    if (!node.IsMap()) throw ConfigError(std::string(section) + " must be a mapping" + where(node));
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) {
            std::string list;
            for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
            throw ConfigError("unknown key '" + key + "' in " + std::string(section) + where(kv.first) +
                              "; expected one of: " + list);
        }
    }
}

Real number(const YAML::Node& node, std::string_view what) {
    if (!node || !node.IsScalar()) throw ConfigError(std::string(what) + " must be a number" + where(node));
    try {
        return parse_quantity(node.Scalar());
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(what) + ": " + e.what() + where(node));
    }
}

void maybe(const YAML::Node& parent, const char* key, Real& target) {
    if (auto n = parent[key]) target = number(n, key);
}

void maybe_bool(const YAML::Node& parent, const char* key, bool& target) {
    if (auto n = parent[key]) {
        try {
            target = n.as<bool>();
        } catch (const YAML::Exception&) {
            throw ConfigError(std::string(key) + " must be true or false" + where(n));
        }
    }
}

std::string text(const YAML::Node& node, std::string_view what) {
    if (!node || !node.IsScalar()) throw ConfigError(std::string(what) + " must be a string" + where(node));
    return node.Scalar();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

std::shared_ptr<const InductanceTable> load_table(const YAML::Node& node, const std::filesystem::path& base) {
    if (node.IsScalar()) {
        return std::make_shared<InductanceTable>(InductanceTable::load_csv(resolve(base, node.Scalar())));
    }
    check_keys(node, "table", {"synthetic", "file"});
    if (auto f = node["file"]) {
        return std::make_shared<InductanceTable>(InductanceTable::load_csv(resolve(base, text(f, "table.file"))));
    }
    SynthTableParams sp;
    if (auto s = node["synthetic"]) {
        check_keys(s, "table.synthetic", {"Lp", "Ls1", "Ls2", "M1", "M2", "span", "transition_width",
                                          "floor_fraction", "lp_dip_fraction", "samples"});
        maybe(s, "Lp", sp.nominal.Lp);
        maybe(s, "Ls1", sp.nominal.Ls1);
        maybe(s, "Ls2", sp.nominal.Ls2);
        maybe(s, "M1", sp.nominal.M1);
        maybe(s, "M2", sp.nominal.M2);
        maybe(s, "span", sp.span);
        maybe(s, "transition_width", sp.transition_width);
        maybe(s, "floor_fraction", sp.floor_fraction);
        maybe(s, "lp_dip_fraction", sp.lp_dip_fraction);
        if (auto n = s["samples"]) sp.samples = static_cast<std::size_t>(number(n, "samples"));
    }
    return std::make_shared<InductanceTable>(synth_table(sp));
}

MotionProfile parse_motion(const YAML::Node& node) {
    if (!node) return MotionProfile::stationary(0.0);
    check_keys(node, "motion", {"kind", "position", "x0", "velocity", "t_start", "times", "positions"});
    const auto kind = node["kind"] ? text(node["kind"], "motion.kind") : std::string("stationary");
    if (kind == "stationary") {
        Real x = 0.0;
        maybe(node, "position", x);
        return MotionProfile::stationary(x);
    }
    if (kind == "constant-velocity" || kind == "constant_velocity") {
        Real x0 = 0.0, v = 0.0, t0 = 0.0;
        maybe(node, "x0", x0);
        maybe(node, "velocity", v);
        maybe(node, "t_start", t0);
        return MotionProfile::constant_velocity(x0, v, t0);
    }
    if (kind == "piecewise") {
        std::vector<Real> times, positions;
        for (const auto& t : node["times"]) times.push_back(number(t, "motion.times"));
        for (const auto& p : node["positions"]) positions.push_back(number(p, "motion.positions"));
        return MotionProfile::piecewise(std::move(times), std::move(positions));
    }
    throw ConfigError("unknown motion kind '" + kind + "' (stationary, constant-velocity, piecewise)" + where(node));
}

void parse_wpt_controllers(const YAML::Node& node, ControllerConfig& c) {
    if (!node) return;
    check_keys(node, "controllers", {"tx", "rx"});
    if (auto tx = node["tx"]) {
        check_keys(tx, "controllers.tx", {"ramp_duration", "final_phase", "frequency"});
        maybe(tx, "ramp_duration", c.tx.ramp_duration);
        maybe(tx, "final_phase", c.tx.final_phase);
        maybe(tx, "frequency", c.tx.frequency);
    }
    if (auto rx = node["rx"]) {
        check_keys(rx, "controllers.rx", {"mode", "start_time", "frequency", "open_loop_duty", "kp", "ki",
                                          "current_reference", "reference_ramp", "max_duty", "feed_forward"});
        if (auto m = rx["mode"]) {
            const auto mode = text(m, "controllers.rx.mode");
            if (mode == "open-loop" || mode == "open_loop") {
                c.rx.mode = RxControllerConfig::Mode::OpenLoop;
            } else if (mode == "closed-loop" || mode == "closed_loop") {
                c.rx.mode = RxControllerConfig::Mode::ClosedLoop;
            } else {
                throw ConfigError("unknown rx mode '" + mode + "' (open-loop, closed-loop)" + where(m));
            }
        }
        maybe(rx, "start_time", c.rx.start_time);
        maybe(rx, "frequency", c.rx.frequency);
        maybe(rx, "open_loop_duty", c.rx.open_loop_duty);
        maybe(rx, "kp", c.rx.kp);
        maybe(rx, "ki", c.rx.ki);
        maybe(rx, "current_reference", c.rx.current_reference);
        maybe(rx, "reference_ramp", c.rx.reference_ramp);
        maybe(rx, "max_duty", c.rx.max_duty);
        maybe_bool(rx, "feed_forward", c.rx.feed_forward);
    }
}

void parse_wpt_params(const YAML::Node& node, WptParams& p) {
    if (!node) return;
    check_keys(node, "system.params",
               {"U_in", "L_f1", "R_f1", "C_p1", "C_s1", "C_s2", "C_f1", "C_f2", "L_B", "R_LB", "R_coil", "R_snubber",
                "C_snubber", "R_bus", "C_bus", "U_bus0", "f_sw_tx", "f_sw_rx", "I_ref", "r_on", "r_off"});
    maybe(node, "U_in", p.U_in);
    maybe(node, "L_f1", p.L_f1);
    maybe(node, "R_f1", p.R_f1);
    maybe(node, "C_p1", p.C_p1);
    maybe(node, "C_s1", p.C_s1);
    maybe(node, "C_s2", p.C_s2);
    maybe(node, "C_f1", p.C_f1);
    maybe(node, "C_f2", p.C_f2);
    maybe(node, "L_B", p.L_B);
    maybe(node, "R_LB", p.R_LB);
    maybe(node, "R_coil", p.R_coil);
    maybe(node, "R_snubber", p.R_snubber);
    maybe(node, "C_snubber", p.C_snubber);
    maybe(node, "R_bus", p.R_bus);
    maybe(node, "C_bus", p.C_bus);
    maybe(node, "U_bus0", p.U_bus0);
    maybe(node, "f_sw_tx", p.f_sw_tx);
    maybe(node, "f_sw_rx", p.f_sw_rx);
    maybe(node, "I_ref", p.I_ref);
    maybe(node, "r_on", p.switches.r_on);
    maybe(node, "r_off", p.switches.r_off);
}

std::vector<ProbeSpec> parse_probes(const YAML::Node& node) {
    std::vector<ProbeSpec> out;
    if (!node) return out;
    if (!node.IsSequence()) throw ConfigError("probes must be a list" + where(node));
    for (const auto& p : node) {
        check_keys(p, "probe", {"name", "signal", "unit"});
        ProbeSpec s;
        s.signal = text(p["signal"], "probe.signal");
        s.name = p["name"] ? text(p["name"], "probe.name") : s.signal;
        if (p["unit"]) s.unit = text(p["unit"], "probe.unit");
        out.push_back(std::move(s));
    }
    return out;
}

void parse_netlist_system(const YAML::Node& sys, const std::filesystem::path& base, SimulationModel& m) {
    check_keys(sys, "system", {"kind", "elements", "ports", "switch", "diode", "table", "initial_conditions"});
    auto net = std::make_shared<Netlist>();
    if (!sys["elements"] || !sys["elements"].IsSequence()) {
        throw ConfigError("system.elements must be a list" + where(sys));
    }
    for (const auto& e : sys["elements"]) {
        check_keys(e, "element", {"id", "kind", "pos", "neg", "value"});
        Element el;
        el.id = text(e["id"], "element.id");
        try {
            el.kind = element_kind_from_string(text(e["kind"], "element.kind"));
        } catch (const ConfigError& err) {
            throw ConfigError(err.what() + where(e["kind"]));
        }
        el.pos = Netlist::canonical_node(text(e["pos"], "element.pos"));
        el.neg = Netlist::canonical_node(text(e["neg"], "element.neg"));
        if (e["value"]) {
            el.value = number(e["value"], "element.value");
        } else if (el.kind != ElementKind::Switch && el.kind != ElementKind::Diode) {
            throw ConfigError("element '" + el.id + "' needs a value" + where(e));
        }
        net->add(std::move(el));
    }
    if (auto ports = sys["ports"]) {
        for (const auto& p : ports) {
            check_keys(p, "port", {"id", "kind", "pos", "neg"});
            NlPort port;
            port.id = text(p["id"], "port.id");
            const auto kind = p["kind"] ? text(p["kind"], "port.kind") : std::string("current");
            if (kind == "current") {
                port.kind = PortKind::CurrentSource;
            } else if (kind == "voltage") {
                port.kind = PortKind::VoltageSource;
            } else {
                throw ConfigError("unknown port kind '" + kind + "' (current, voltage)" + where(p));
            }
            port.pos = Netlist::canonical_node(text(p["pos"], "port.pos"));
            port.neg = Netlist::canonical_node(text(p["neg"], "port.neg"));
            net->add_port(std::move(port));
        }
    }
    net->validate();
    m.netlist = net;
    if (auto sw = sys["switch"]) {
        check_keys(sw, "system.switch", {"r_on", "r_off"});
        maybe(sw, "r_on", m.switch_params.r_on);
        maybe(sw, "r_off", m.switch_params.r_off);
    }
    if (auto d = sys["diode"]) {
        check_keys(d, "system.diode", {"v_on", "i_off"});
        maybe(d, "v_on", m.diode_thresholds.v_on);
        maybe(d, "i_off", m.diode_thresholds.i_off);
    }
    if (auto t = sys["table"]) m.table = load_table(t, base);
    if (auto ic = sys["initial_conditions"]) {
        for (const auto& kv : ic) m.initial_conditions[kv.first.as<std::string>()] = number(kv.second, "initial condition");
    }
}

void parse_netlist_controllers(const YAML::Node& node, SimulationModel& m) {
    if (!node) return;
    if (!node.IsSequence()) throw ConfigError("controllers of a netlist system must be a list" + where(node));
    for (const auto& c : node) {
        check_keys(c, "controller", {"type", "switch", "frequency", "duty", "phase", "start", "on"});
        const auto type = text(c["type"], "controller.type");
        const auto sw = text(c["switch"], "controller.switch");
        if (type == "pwm") {
            Real f = 0.0, d = 0.5, ph = 0.0, t0 = 0.0;
            maybe(c, "frequency", f);
            maybe(c, "duty", d);
            maybe(c, "phase", ph);
            maybe(c, "start", t0);
            m.controllers.push_back(std::make_shared<PwmController>(sw, f, d, ph, t0));
        } else if (type == "constant") {
            bool on = true;
            maybe_bool(c, "on", on);
            m.controllers.push_back(std::make_shared<ConstantGateController>(sw, on));
        } else {
            throw ConfigError("unknown controller type '" + type + "' (pwm, constant)" + where(c));
        }
    }
}

}  // namespace

Real parse_quantity(std::string_view in) {
    const auto s = trim(in);
    if (s.empty()) throw ConfigError("empty number");
    const char* begin = s.c_str();
    char* end = nullptr;
    const Real v = std::strtod(begin, &end);
    if (end == begin) throw ConfigError("'" + s + "' is not a number");
    auto rest = trim(std::string_view(end));
    if (rest.empty()) return v;
    if (is_unit(rest)) return v;
    for (const auto& [prefix, scale] : si_prefixes()) {
        if (rest.rfind(prefix, 0) != 0 || !is_unit(std::string_view(rest).substr(prefix.size()))) continue;
        // "75n" read as "75e-9" rounds once; 75 * 1e-9 would round twice
        const std::string mantissa(begin, static_cast<std::size_t>(end - begin));
        if (mantissa.find_first_of("eE") != std::string::npos) return v * scale;
        const auto exponent = static_cast<int>(std::lround(std::log10(scale)));
        return std::strtod((mantissa + "e" + std::to_string(exponent)).c_str(), nullptr);
    }
    throw ConfigError("'" + s + "' has an unknown unit suffix '" + rest + "'");
}

ScenarioConfig parse_scenario(const std::string& source, const std::filesystem::path& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(source);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("scenario is not valid YAML: ") + e.what());
    }
    if (!root.IsMap()) throw ConfigError("scenario must be a mapping");
    check_keys(root, "scenario", {"name", "description", "system", "controllers", "motion", "solver", "window",
                                  "probes", "divergence"});

    ScenarioConfig s;
    s.source = source;
    s.name = root["name"] ? text(root["name"], "name") : std::string("scenario");

    const auto sys = root["system"];
    if (!sys) throw ConfigError("scenario needs a system section");
    const auto kind = sys["kind"] ? text(sys["kind"], "system.kind") : std::string("netlist");

    if (kind == "wpt") {
        check_keys(sys, "system", {"kind", "params", "table"});
        WptParams params;
        parse_wpt_params(sys["params"], params);
        ControllerConfig ctl;
        parse_wpt_controllers(root["controllers"], ctl);
        s.model = build_wpt_model(params, ctl, parse_motion(root["motion"]), s.name);
        if (auto t = sys["table"]) s.model.table = load_table(t, base_dir);
        auto extra = parse_probes(root["probes"]);
        s.model.probes.insert(s.model.probes.end(), extra.begin(), extra.end());
    } else if (kind == "netlist") {
        s.model.name = s.name;
        parse_netlist_system(sys, base_dir, s.model);
        parse_netlist_controllers(root["controllers"], s.model);
        s.model.motion = parse_motion(root["motion"]);
        s.model.probes = parse_probes(root["probes"]);
    } else {
        throw ConfigError("unknown system kind '" + kind + "' (wpt, netlist)" + where(sys));
    }

    if (auto sv = root["solver"]) {
        check_keys(sv, "solver", {"method", "h", "backend", "t_end", "decimation", "newton"});
        if (sv["method"]) s.solver.method = method_from_string(text(sv["method"], "solver.method"));
        maybe(sv, "h", s.solver.h);
        if (sv["backend"]) s.solver.backend = backend_from_string(text(sv["backend"], "solver.backend"));
        maybe(sv, "t_end", s.t_end);
        if (auto d = sv["decimation"]) s.solver.decimation = static_cast<std::size_t>(number(d, "decimation"));
        if (auto nw = sv["newton"]) {
            check_keys(nw, "solver.newton", {"max_iterations", "tolerance"});
            if (auto it = nw["max_iterations"]) s.solver.newton.max_iter = static_cast<int>(number(it, "max_iterations"));
            maybe(nw, "tolerance", s.solver.newton.tol);
        }
    }
    if (auto w = root["window"]) {
        if (!w.IsSequence() || w.size() != 2) throw ConfigError("window must be [t0, t1]" + where(w));
        s.window = {{number(w[0], "window"), number(w[1], "window")}};
    }
    if (auto d = root["divergence"]) {
        check_keys(d, "divergence", {"factor", "oracle_peaks", "limits"});
        Real factor = 1e6;
        maybe(d, "factor", factor);
        if (auto peaks = d["oracle_peaks"]) {
            for (const auto& kv : peaks) {
                s.model.divergence_limits[kv.first.as<std::string>()] = factor * number(kv.second, "oracle peak");
            }
        }
        if (auto lim = d["limits"]) {
            for (const auto& kv : lim) s.model.divergence_limits[kv.first.as<std::string>()] = number(kv.second, "limit");
        }
    }
    s.solver.validate();
    s.model.validate();
    return s;
}

ScenarioConfig load_scenario_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open scenario file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path.parent_path());
}

std::filesystem::path scenario_directory() {
    if (const char* env = std::getenv("IMEXSIM_SCENARIO_DIR"); env && *env) return env;
    return IMEXSIM_DEFAULT_SCENARIO_DIR;
}

ScenarioConfig load_scenario(std::string_view name_or_path) {
    const std::filesystem::path p(name_or_path);
    if (std::filesystem::exists(p) && std::filesystem::is_regular_file(p)) return load_scenario_file(p);
    const auto candidate = scenario_directory() / (std::string(name_or_path) + ".yaml");
    if (std::filesystem::exists(candidate)) return load_scenario_file(candidate);
    std::string available;
    std::error_code ec;
    for (const auto& e : std::filesystem::directory_iterator(scenario_directory(), ec)) {
        if (e.path().extension() == ".yaml") available += (available.empty() ? "" : ", ") + e.path().stem().string();
    }
    throw ConfigError("no scenario '" + std::string(name_or_path) + "' (available: " + available + ")");
}

std::string scenario_hash(const ScenarioConfig& scenario) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : scenario.source) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[h & 0xF];
        h >>= 4;
    }
    return out;
}

}  // namespace imexsim
