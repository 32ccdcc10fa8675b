#pragma once

// =============================================================================
// Reference systems
// =============================================================================
// Railway WPT system: a phase-shifted full bridge feeds an L_f1 / C_p1
// compensated transmitter coil; two series-compensated receivers rectify into
// C_f1 / C_f2, each followed by two interleaved buck converters charging a
// common supercapacitor bus. The three coils form the nonlinear coupling
// (ports P_tx, P_rx1, P_rx2); everything else is the switched network.
//
// The transmitter is a plain full bridge, not the three-level clamp converter
// of the original system, so absolute waveform values are not comparable with
// published numbers; only method-to-method comparisons are meaningful.
// =============================================================================

#include "imexsim/solvers.hpp"

#include <optional>
#include <string>
#include <utility>

namespace imexsim {

struct WptParams {
    Real U_in = 1.5e3;
    Real L_f1 = 42.95e-6;
    Real R_f1 = 2e-3;        ///< series resistance of L_f1
    Real C_p1 = 442.8e-9;
    Real C_s1 = 62.34e-9;
    Real C_s2 = 62.34e-9;
    Real C_f1 = 400e-6;
    Real C_f2 = 400e-6;
    Real L_B = 1.1e-3;       ///< all four buck inductors
    Real R_LB = 0.1;         ///< winding resistance of each buck inductor
    Real R_coil = 20e-3;     ///< winding resistance in series with every coil port
    Real R_snubber = 10.0;   ///< RC snubber across each rectifier input
    Real C_snubber = 10e-9;
    Real R_bus = 5e-3;       ///< supercapacitor series resistance
    Real C_bus = 1.0;        ///< supercapacitor bank
    Real U_bus0 = 953.0;     ///< supercapacitor precharge
    Real f_sw_tx = 40e3;
    Real f_sw_rx = 5e3;
    Real I_ref = 200.0;
    SwitchParams switches;
    SynthTableParams table;

    void validate() const;
};

struct TxControllerConfig {
    Real ramp_duration = 0.01;  ///< s, phase shift ramps linearly from 0
    Real final_phase = 1.565;   ///< rad in (0, pi]; pi gives a full square wave
    Real frequency = 40e3;
};

struct RxControllerConfig {
    enum class Mode { OpenLoop, ClosedLoop };
    Mode mode = Mode::ClosedLoop;
    Real start_time = 0.01;
    Real frequency = 5e3;     ///< PWM carrier and control update rate
    Real open_loop_duty = 0.8;
    Real kp = 0.3;            ///< V/A with feed-forward, 1/A without
    Real ki = 100.0;          ///< V/(A s) with feed-forward, 1/(A s) without
    Real current_reference = 200.0;
    Real reference_ramp = 5e-3;  ///< s, soft start of the reference (open loop: of the duty)
    Real max_duty = 0.95;
    bool feed_forward = true; ///< duty = (U_C + PI) / mean(U_Cf)
};

struct ControllerConfig {
    TxControllerConfig tx;
    RxControllerConfig rx;
};

/// Phase-shifted full bridge: leg A is a 50 % square wave, leg B the same
/// wave delayed by phi(t). The two switches of a leg are complementary.
class TxController : public Controller {
public:
    TxController(TxControllerConfig config, std::array<std::string, 4> switches);

    [[nodiscard]] std::unique_ptr<Controller> clone() const override;
    void bind(const Netlist& netlist, const std::vector<std::string>& probe_names) override;
    void update(Real t, std::span<const Real> probes, std::vector<bool>& gates) override;
    [[nodiscard]] std::vector<std::pair<std::string, Real>> periods() const override;

    [[nodiscard]] Real phase(Real t) const;
    /// Gate pattern {S1, S2, S3, S4} at time t.
    [[nodiscard]] std::array<bool, 4> pattern(Real t) const;

private:
    TxControllerConfig config_;
    std::array<std::string, 4> names_;
    std::array<std::size_t, 4> index_{};
};

/// Receiver-side buck control: gates stay off before start_time; afterwards a
/// PI loop on the output current averaged over each control period sets a
/// common duty, applied to interleaved carriers.
class RxController : public Controller {
public:
    struct Buck {
        std::string switch_id;
        Real carrier_offset = 0.0;  ///< fraction of the period
        std::size_t receiver = 0;   ///< selects the input-voltage probe
    };
    RxController(RxControllerConfig config, std::vector<Buck> bucks, std::string output_current_probe,
                 std::string bus_voltage_probe, std::vector<std::string> input_voltage_probes);

    [[nodiscard]] std::unique_ptr<Controller> clone() const override;
    void bind(const Netlist& netlist, const std::vector<std::string>& probe_names) override;
    void update(Real t, std::span<const Real> probes, std::vector<bool>& gates) override;
    [[nodiscard]] std::vector<std::pair<std::string, Real>> periods() const override;

    [[nodiscard]] const std::vector<Real>& duties() const { return duty_; }
    /// Current reference at t (soft-start ramp, then constant).
    [[nodiscard]] Real reference(Real t) const;

private:
    void control_update(Real t, std::span<const Real> probes);

    RxControllerConfig config_;
    std::vector<Buck> bucks_;
    std::string i_out_name_;
    std::string u_bus_name_;
    std::vector<std::string> u_in_names_;
    std::vector<std::size_t> switch_index_;
    std::size_t i_out_ = 0;
    std::size_t u_bus_ = 0;
    std::vector<std::size_t> u_in_;

    std::vector<Real> duty_;  ///< per receiver
    Real integral_ = 0.0;
    Real sum_ = 0.0;
    std::size_t count_ = 0;
    long long last_period_ = -1;
};

/// Fixed-duty PWM on one switch (generic netlist scenarios).
class PwmController : public Controller {
public:
    PwmController(std::string switch_id, Real frequency, Real duty, Real phase = 0.0, Real start = 0.0);
    [[nodiscard]] std::unique_ptr<Controller> clone() const override;
    void bind(const Netlist& netlist, const std::vector<std::string>& probe_names) override;
    void update(Real t, std::span<const Real> probes, std::vector<bool>& gates) override;
    [[nodiscard]] std::vector<std::pair<std::string, Real>> periods() const override;

private:
    std::string id_;
    Real frequency_;
    Real duty_;
    Real phase_;
    Real start_;
    std::size_t index_ = 0;
};

/// Switch held permanently on or off.
class ConstantGateController : public Controller {
public:
    ConstantGateController(std::string switch_id, bool on);
    [[nodiscard]] std::unique_ptr<Controller> clone() const override;
    void bind(const Netlist& netlist, const std::vector<std::string>& probe_names) override;
    void update(Real t, std::span<const Real> probes, std::vector<bool>& gates) override;

private:
    std::string id_;
    bool on_;
    std::size_t index_ = 0;
};

struct WptSystem {
    std::shared_ptr<const Netlist> netlist;
    std::shared_ptr<const InductanceTable> table;
    std::vector<ProbeSpec> probes;
    std::map<std::string, Real> initial_conditions;
};

/// Probe names of the comparison table, in table order.
[[nodiscard]] const std::vector<std::string>& table_probe_names();

[[nodiscard]] WptSystem build_wpt_system(const WptParams& params);
[[nodiscard]] SimulationModel build_wpt_model(const WptParams& params, const ControllerConfig& controllers,
                                              const MotionProfile& motion, std::string name = "wpt");

struct ScenarioConfig {
    std::string name;
    SimulationModel model;
    SolverConfig solver;
    Real t_end = 0.0;
    std::optional<std::pair<Real, Real>> window;  ///< default metrics window
    std::string source;                           ///< canonical text used for hashing
};

enum class MotionScenario { StartupStatic, DynamicTransit };

[[nodiscard]] MotionScenario motion_scenario_from_string(std::string_view text);

/// startup-static: closed loop, coils pinned at nominal coupling, 0.05 s.
/// dynamic-transit: open loop, receivers sweep the whole table at constant
/// velocity after the startup ramp.
[[nodiscard]] ScenarioConfig build_motion_scenario(MotionScenario kind, const WptParams& params = {},
                                                   std::optional<ControllerConfig> controllers = std::nullopt);

/// Default controller settings of each motion scenario.
[[nodiscard]] ControllerConfig default_controllers(MotionScenario kind);

struct StiffCircuitParams {
    Real C_p1 = 442.8e-9;
    Real L_f1 = 42.95e-6;
    Real R_f1 = 2e-3;
    Real C_s = 62.34e-9;
    Real R_load = 1.0;
    Inductances coupling = SynthTableParams{}.nominal;
};

struct StiffCircuit {
    std::shared_ptr<const Netlist> netlist;
    FrozenSystem system;
};

/// One switching state of the transmitter/receiver path with the coupled
/// coils at nominal inductance: C_p1 across the transmitter coil, L_f1 with
/// its resistance, and each receiver coil closed through C_s and R_load.
[[nodiscard]] StiffCircuit build_stiff_test_circuit(const StiffCircuitParams& params = {});

}  // namespace imexsim
