#include "imexsim/scenarios.hpp"

#include "imexsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace imexsim {

namespace {

Real frac(Real v) { return v - std::floor(v); }

void require_positive(Real v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(std::string(what) + " must be positive and finite");
    }
}

}  // namespace

void WptParams::validate() const {
    require_positive(U_in, "U_in");
    require_positive(L_f1, "L_f1");
    require_positive(R_f1, "R_f1");
    require_positive(C_p1, "C_p1");
    require_positive(C_s1, "C_s1");
    require_positive(C_s2, "C_s2");
    require_positive(C_f1, "C_f1");
    require_positive(C_f2, "C_f2");
    require_positive(L_B, "L_B");
    require_positive(R_LB, "R_LB");
    require_positive(R_coil, "R_coil");
    require_positive(R_snubber, "R_snubber");
    require_positive(C_snubber, "C_snubber");
    require_positive(R_bus, "R_bus");
    require_positive(C_bus, "C_bus");
    require_positive(f_sw_tx, "f_sw_tx");
    require_positive(f_sw_rx, "f_sw_rx");
    require_positive(I_ref, "I_ref");
    if (U_bus0 < 0.0) throw ConfigError("U_bus0 must be non-negative");
    switches.validate();
    if (!table.nominal.is_spd()) throw ConfigError("nominal coupling inductances are not positive definite");
}

// -----------------------------------------------------------------------------
// Transmitter
// -----------------------------------------------------------------------------

TxController::TxController(TxControllerConfig config, std::array<std::string, 4> switches)
    : config_(config), names_(std::move(switches)) {
    if (config_.ramp_duration < 0.0) throw ConfigError("tx ramp_duration must be >= 0");
    require_positive(config_.frequency, "tx frequency");
    if (!(config_.final_phase >= 0.0 && config_.final_phase <= std::numbers::pi)) {
        throw ConfigError("tx final_phase must lie in [0, pi]");
    }
}

std::unique_ptr<Controller> TxController::clone() const { return std::make_unique<TxController>(*this); }

void TxController::bind(const Netlist& netlist, const std::vector<std::string>&) {
    for (std::size_t i = 0; i < 4; ++i) index_[i] = switch_index(netlist, names_[i]);
}

Real TxController::phase(Real t) const {
    if (t <= 0.0) return 0.0;
    if (config_.ramp_duration <= 0.0 || t >= config_.ramp_duration) return config_.final_phase;
    return config_.final_phase * t / config_.ramp_duration;
}

std::array<bool, 4> TxController::pattern(Real t) const {
    const Real cycles = t * config_.frequency;
    const bool a = frac(cycles) < 0.5;
    const bool b = frac(cycles - phase(t) / (2.0 * std::numbers::pi)) < 0.5;
    return {a, !a, b, !b};
}

void TxController::update(Real t, std::span<const Real>, std::vector<bool>& gates) {
    const auto p = pattern(t);
    for (std::size_t i = 0; i < 4; ++i) gates[index_[i]] = p[i];
}

std::vector<std::pair<std::string, Real>> TxController::periods() const {
    return {{"transmitter carrier", 1.0 / config_.frequency}};
}

// -----------------------------------------------------------------------------
// Receiver bucks
// -----------------------------------------------------------------------------

RxController::RxController(RxControllerConfig config, std::vector<Buck> bucks, std::string output_current_probe,
                           std::string bus_voltage_probe, std::vector<std::string> input_voltage_probes)
    : config_(config),
      bucks_(std::move(bucks)),
      i_out_name_(std::move(output_current_probe)),
      u_bus_name_(std::move(bus_voltage_probe)),
      u_in_names_(std::move(input_voltage_probes)) {
    require_positive(config_.frequency, "rx frequency");
    if (config_.start_time < 0.0) throw ConfigError("rx start_time must be >= 0");
    if (config_.reference_ramp < 0.0) throw ConfigError("rx reference_ramp must be >= 0");
    if (!(config_.max_duty > 0.0 && config_.max_duty <= 1.0)) throw ConfigError("rx max_duty must lie in (0, 1]");
    if (config_.open_loop_duty < 0.0 || config_.open_loop_duty > config_.max_duty) {
        throw ConfigError("rx open_loop_duty must lie in [0, max_duty]");
    }
    for (const auto& b : bucks_) {
        if (b.receiver >= u_in_names_.size()) throw ConfigError("buck '" + b.switch_id + "' names an unknown receiver");
    }
    duty_.assign(u_in_names_.size(), 0.0);
}

std::unique_ptr<Controller> RxController::clone() const { return std::make_unique<RxController>(*this); }

void RxController::bind(const Netlist& netlist, const std::vector<std::string>& probe_names) {
    auto probe = [&](const std::string& name) {
        auto it = std::find(probe_names.begin(), probe_names.end(), name);
        if (it == probe_names.end()) throw ConfigError("rx controller needs probe '" + name + "'");
        return static_cast<std::size_t>(it - probe_names.begin());
    };
    switch_index_.clear();
    for (const auto& b : bucks_) switch_index_.push_back(switch_index(netlist, b.switch_id));
    if (config_.mode == RxControllerConfig::Mode::ClosedLoop) {
        i_out_ = probe(i_out_name_);
        if (config_.feed_forward) {
            u_bus_ = probe(u_bus_name_);
            u_in_.clear();
            for (const auto& n : u_in_names_) u_in_.push_back(probe(n));
        }
    }
    duty_.assign(u_in_names_.size(), 0.0);
    integral_ = 0.0;
    sum_ = 0.0;
    count_ = 0;
    last_period_ = -1;
}

Real RxController::reference(Real t) const {
    const Real since = t - config_.start_time;
    if (config_.reference_ramp <= 0.0 || since >= config_.reference_ramp) return config_.current_reference;
    return config_.current_reference * std::max(since, 0.0) / config_.reference_ramp;
}

void RxController::control_update(Real t, std::span<const Real> probes) {
    if (config_.mode == RxControllerConfig::Mode::OpenLoop) {
        // same soft start as the closed-loop reference
        const Real scale = config_.current_reference > 0.0 ? reference(t) / config_.current_reference : 1.0;
        std::fill(duty_.begin(), duty_.end(), config_.open_loop_duty * scale);
        return;
    }
    const Real avg = count_ > 0 ? sum_ / static_cast<Real>(count_) : probes[i_out_];
    const Real e = reference(t) - avg;
    const Real dt = 1.0 / config_.frequency;
    const Real integral_prev = integral_;
    integral_ += config_.ki * e * dt;
    // One duty for every buck. With feed-forward the PI output is the voltage
    // across the buck inductors, d = (U_C + v_pi) / mean(U_Cf), so the loop gain
    // does not move with the C_f voltage; using the mean keeps the sharing
    // between receivers self-balancing (the higher C_f also delivers more).
    Real d = config_.kp * e + integral_;
    if (config_.feed_forward) {
        Real u_in = 0.0;
        for (auto i : u_in_) u_in += probes[i];
        u_in /= static_cast<Real>(u_in_.size());
        d = u_in > 1.0 ? (probes[u_bus_] + d) / u_in : config_.max_duty;
    }
    const bool saturated_high = d > config_.max_duty;
    const bool saturated_low = d < 0.0;
    std::fill(duty_.begin(), duty_.end(), std::clamp(d, 0.0, config_.max_duty));
    // conditional integration: no wind-up while pushing into a limit
    if ((saturated_high && e > 0.0) || (saturated_low && e < 0.0)) integral_ = integral_prev;
}

void RxController::update(Real t, std::span<const Real> probes, std::vector<bool>& gates) {
    if (t < config_.start_time) {
        for (auto i : switch_index_) gates[i] = false;
        return;
    }
    const Real cycles = (t - config_.start_time) * config_.frequency;
    // guard against t landing a hair below a period edge
    const auto period = static_cast<long long>(std::floor(cycles + 1e-9));
    if (period != last_period_) {
        control_update(t, probes);
        last_period_ = period;
        sum_ = 0.0;
        count_ = 0;
    }
    if (config_.mode == RxControllerConfig::Mode::ClosedLoop) {
        sum_ += probes[i_out_];
        ++count_;
    }
    for (std::size_t j = 0; j < bucks_.size(); ++j) {
        const Real d = duty_[bucks_[j].receiver];
        gates[switch_index_[j]] = d > 0.0 && frac(cycles + bucks_[j].carrier_offset) < d;
    }
}

std::vector<std::pair<std::string, Real>> RxController::periods() const {
    return {{"receiver carrier", 1.0 / config_.frequency}};
}

// -----------------------------------------------------------------------------
// Generic gate sources
// -----------------------------------------------------------------------------

PwmController::PwmController(std::string switch_id, Real frequency, Real duty, Real phase, Real start)
    : id_(std::move(switch_id)), frequency_(frequency), duty_(duty), phase_(phase), start_(start) {
    require_positive(frequency_, "pwm frequency");
    if (duty_ < 0.0 || duty_ > 1.0) throw ConfigError("pwm duty must lie in [0, 1]");
}

std::unique_ptr<Controller> PwmController::clone() const { return std::make_unique<PwmController>(*this); }

void PwmController::bind(const Netlist& netlist, const std::vector<std::string>&) {
    index_ = switch_index(netlist, id_);
}

void PwmController::update(Real t, std::span<const Real>, std::vector<bool>& gates) {
    gates[index_] = t >= start_ && duty_ > 0.0 && frac((t - start_) * frequency_ + phase_) < duty_;
}

std::vector<std::pair<std::string, Real>> PwmController::periods() const {
    return {{"pwm '" + id_ + "'", 1.0 / frequency_}};
}

ConstantGateController::ConstantGateController(std::string switch_id, bool on) : id_(std::move(switch_id)), on_(on) {}

std::unique_ptr<Controller> ConstantGateController::clone() const {
    return std::make_unique<ConstantGateController>(*this);
}

void ConstantGateController::bind(const Netlist& netlist, const std::vector<std::string>&) {
    index_ = switch_index(netlist, id_);
}

void ConstantGateController::update(Real, std::span<const Real>, std::vector<bool>& gates) { gates[index_] = on_; }

// -----------------------------------------------------------------------------
// WPT system
// -----------------------------------------------------------------------------

const std::vector<std::string>& table_probe_names() {
    static const std::vector<std::string> names{"I_rx1", "U_tx", "U_C", "I_buck11", "I_out"};
    return names;
}

WptSystem build_wpt_system(const WptParams& p) {
    p.validate();
    auto net = std::make_shared<Netlist>();
    auto& n = *net;

    // transmitter: full bridge -> L_f1 -> C_p1 || coil
    n.add_voltage_source("V_in", "dc", "0", p.U_in);
    n.add_switch("S1", "dc", "A");
    n.add_switch("S2", "A", "0");
    n.add_switch("S3", "dc", "B");
    n.add_switch("S4", "B", "0");
    n.add_diode("D_S1", "A", "dc");
    n.add_diode("D_S2", "0", "A");
    n.add_diode("D_S3", "B", "dc");
    n.add_diode("D_S4", "0", "B");
    n.add_resistor("R_f1", "A", "lf", p.R_f1);
    n.add_inductor("L_f1", "lf", "P", p.L_f1);
    n.add_capacitor("C_p1", "P", "B", p.C_p1);
    n.add_resistor("R_tx", "P", "tx_c", p.R_coil);
    n.add_port({"P_tx", PortKind::CurrentSource, "tx_c", "B"});

    // receivers: coil -> C_s -> diode bridge -> C_f -> two bucks
    for (int k = 1; k <= 2; ++k) {
        const auto s = std::to_string(k);
        const std::string a = "r" + s + "_a", b = "r" + s + "_b", tt = "r" + s + "_t", c = "r" + s + "_c";
        const std::string dc = "dc" + s;
        n.add_capacitor("C_s" + s, a, tt, k == 1 ? p.C_s1 : p.C_s2);
        n.add_resistor("R_rx" + s, tt, c, p.R_coil);
        n.add_port({"P_rx" + s, PortKind::CurrentSource, c, b});
        n.add_diode("D_" + s + "1", a, dc);
        n.add_diode("D_" + s + "2", b, dc);
        n.add_diode("D_" + s + "3", "0", a);
        n.add_diode("D_" + s + "4", "0", b);
        n.add_resistor("R_sn" + s, a, "r" + s + "_s", p.R_snubber);
        n.add_capacitor("C_sn" + s, "r" + s + "_s", b, p.C_snubber);
        n.add_capacitor("C_f" + s, dc, "0", k == 1 ? p.C_f1 : p.C_f2);
        for (int j = 1; j <= 2; ++j) {
            const auto kj = s + std::to_string(j);
            const std::string sw = "sw" + kj;
            n.add_switch("S_B" + kj, dc, sw);
            n.add_diode("D_B" + kj, sw, dc);
            n.add_diode("D_F" + kj, "0", sw);
            // the winding resistance damps the current split between parallel bucks
            n.add_inductor("L_B" + kj, sw, "lb" + kj, p.L_B);
            n.add_resistor("R_LB" + kj, "lb" + kj, "bus", p.R_LB);
        }
    }
    n.add_resistor("R_bus", "bus", "sc", p.R_bus);
    n.add_capacitor("C_bus", "sc", "0", p.C_bus);
    n.validate();

    WptSystem sys;
    sys.netlist = net;
    sys.table = std::make_shared<InductanceTable>(synth_table(p.table));
    sys.probes = {
        {"I_rx1", "A", "I(P_rx1)"},    {"U_tx", "V", "V(C_p1)"},      {"U_C", "V", "V(bus)"},
        {"I_buck11", "A", "I(L_B11)"}, {"I_out", "A", "I(R_bus)"},    {"I_Lf", "A", "I(L_f1)"},
        {"I_TX", "A", "I(P_tx)"},      {"U_out", "V", "V(C_f1)"},     {"U_p", "V", "V(P_tx)"},
        {"I_rx2", "A", "I(P_rx2)"},    {"U_out2", "V", "V(C_f2)"},
    };
    // DC links precharged to the bus so the buck body diodes see no inrush at t = 0
    sys.initial_conditions = {{"v(C_bus)", p.U_bus0}, {"v(C_f1)", p.U_bus0}, {"v(C_f2)", p.U_bus0}};
    return sys;
}

SimulationModel build_wpt_model(const WptParams& params, const ControllerConfig& controllers,
                                const MotionProfile& motion, std::string name) {
    auto sys = build_wpt_system(params);
    SimulationModel m;
    m.name = std::move(name);
    m.netlist = sys.netlist;
    m.switch_params = params.switches;
    m.table = sys.table;
    m.motion = motion;
    m.probes = sys.probes;
    m.initial_conditions = sys.initial_conditions;

    auto tx = controllers.tx;
    tx.frequency = params.f_sw_tx;
    auto rx = controllers.rx;
    rx.frequency = params.f_sw_rx;
    rx.current_reference = params.I_ref;
    m.controllers.push_back(std::make_shared<TxController>(tx, std::array<std::string, 4>{"S1", "S2", "S3", "S4"}));
    m.controllers.push_back(std::make_shared<RxController>(
        rx,
        std::vector<RxController::Buck>{{"S_B11", 0.0, 0}, {"S_B12", 0.5, 0}, {"S_B21", 0.25, 1}, {"S_B22", 0.75, 1}},
        "I_out", "U_C", std::vector<std::string>{"U_out", "U_out2"}));
    return m;
}

MotionScenario motion_scenario_from_string(std::string_view text) {
    if (text == "startup-static" || text == "startup_static" || text == "wpt_startup") return MotionScenario::StartupStatic;
    if (text == "dynamic-transit" || text == "dynamic_transit" || text == "wpt_transit") return MotionScenario::DynamicTransit;
    throw ConfigError("unknown motion scenario '" + std::string(text) + "' (startup-static, dynamic-transit)");
}

ControllerConfig default_controllers(MotionScenario kind) {
    ControllerConfig c;
    if (kind == MotionScenario::DynamicTransit) {
        c.rx.mode = RxControllerConfig::Mode::OpenLoop;
        c.rx.open_loop_duty = 0.84;
        c.rx.reference_ramp = 0.01;
    }
    return c;
}

namespace {

// Transit timing: the startup ramp settles first, then the receivers cross the
// whole table at 10 m/s. Slow enough that both receivers sit in the weakly
// coupled middle for tens of milliseconds.
constexpr Real transit_start = 0.02;
constexpr Real transit_duration = 0.2;

}  // namespace

ScenarioConfig build_motion_scenario(MotionScenario kind, const WptParams& params,
                                     std::optional<ControllerConfig> controllers) {
    const auto ctl = controllers.value_or(default_controllers(kind));
    ScenarioConfig s;
    s.solver.method = Method::Imex;
    s.solver.h = 75e-9;
    std::ostringstream src;
    src.precision(17);
    if (kind == MotionScenario::StartupStatic) {
        s.name = "wpt_startup";
        s.t_end = 0.05;
        s.window = {{0.048, 0.049}};
        s.model = build_wpt_model(params, ctl, MotionProfile::stationary(0.0), s.name);
    } else {
        s.name = "wpt_transit";
        s.t_end = transit_start + transit_duration;
        const Real span = params.table.span;
        s.model = build_wpt_model(params, ctl,
                                  MotionProfile::constant_velocity(0.0, span / transit_duration, transit_start),
                                  s.name);
    }
    src << "builtin " << s.name << " phase=" << ctl.tx.final_phase << " ramp=" << ctl.tx.ramp_duration
        << " rx_mode=" << (ctl.rx.mode == RxControllerConfig::Mode::OpenLoop ? "open" : "closed")
        << " duty=" << ctl.rx.open_loop_duty << " kp=" << ctl.rx.kp << " ki=" << ctl.rx.ki
        << " U_in=" << params.U_in << " U_bus0=" << params.U_bus0;
    s.source = src.str();
    return s;
}

// -----------------------------------------------------------------------------
// Stiff stand-in circuit
// -----------------------------------------------------------------------------

StiffCircuit build_stiff_test_circuit(const StiffCircuitParams& p) {
    require_positive(p.C_p1, "C_p1");
    require_positive(p.L_f1, "L_f1");
    require_positive(p.R_f1, "R_f1");
    require_positive(p.C_s, "C_s");
    require_positive(p.R_load, "R_load");

    auto net = std::make_shared<Netlist>();
    auto& n = *net;
    n.add_capacitor("C_p1", "P", "0", p.C_p1);
    n.add_inductor("L_f1", "P", "lf", p.L_f1);
    n.add_resistor("R_f1", "lf", "0", p.R_f1);
    n.add_port({"P_tx", PortKind::CurrentSource, "P", "0"});
    for (int k = 1; k <= 2; ++k) {
        const auto s = std::to_string(k);
        n.add_port({"P_rx" + s, PortKind::CurrentSource, "c" + s, "0"});
        n.add_capacitor("C_s" + s, "c" + s, "r" + s, p.C_s);
        n.add_resistor("R_load" + s, "r" + s, "0", p.R_load);
    }
    n.validate();

    const auto entry = build_state_space(n, SwitchParams{}, SwitchSignals{});
    StiffCircuit out;
    out.netlist = net;
    out.system = FrozenSystem::from_entry(entry, 3, inverse_inductance(p.coupling));
    return out;
}

}  // namespace imexsim
