#pragma once

// =============================================================================
// Piecewise-linear switched network
// =============================================================================
// A netlist of linear elements plus binary-resistor switches and diodes is
// turned into one state-space realisation per switching state k:
//
//     dx/dt = A_k x + B1_k u + B2_k y_nl
//     y     = C_k x + D1_k u + D2_k y_nl
//
// x holds capacitor voltages and inductor currents, u the independent sources
// and y_nl the values imposed by the nonlinear part through the interface
// ports. The output vector y always starts with the port duals (the port
// voltage for a current port), followed by a (current, voltage) pair per
// diode and finally the user-requested probe outputs.
// =============================================================================

#include "imexsim/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace imexsim {

enum class ElementKind {
    Resistor,
    Inductor,
    Capacitor,
    VoltageSource,
    CurrentSource,
    Switch,
    Diode,
};

[[nodiscard]] std::string_view to_string(ElementKind kind);
[[nodiscard]] ElementKind element_kind_from_string(std::string_view text);

/// One two-terminal element. Current references run from `pos` to `neg`
/// through the element; for diodes `pos` is the anode.
struct Element {
    std::string id;
    ElementKind kind = ElementKind::Resistor;
    std::string pos;
    std::string neg;
    Real value = 0.0;  ///< ohm, henry, farad, or the nominal source value
};

enum class PortKind {
    CurrentSource,  ///< driven by a current from the nonlinear side, dual = port voltage
    VoltageSource,  ///< driven by a voltage from the nonlinear side, dual = port current
};

/// Interface port toward the nonlinear part (one half of an ideal-transformer pair).
struct NlPort {
    std::string id;
    PortKind kind = PortKind::CurrentSource;
    std::string pos;
    std::string neg;
};

class Netlist {
public:
    static constexpr std::string_view ground = "0";

    /// Maps "gnd"/"GND" to the canonical ground name.
    [[nodiscard]] static std::string canonical_node(std::string_view name);

    Element& add(Element element);
    Element& add_resistor(std::string id, std::string pos, std::string neg, Real ohms);
    Element& add_inductor(std::string id, std::string pos, std::string neg, Real henries);
    Element& add_capacitor(std::string id, std::string pos, std::string neg, Real farads);
    Element& add_voltage_source(std::string id, std::string pos, std::string neg, Real volts);
    Element& add_current_source(std::string id, std::string pos, std::string neg, Real amps);
    Element& add_switch(std::string id, std::string pos, std::string neg);
    Element& add_diode(std::string id, std::string anode, std::string cathode);
    NlPort& add_port(NlPort port);

    [[nodiscard]] const std::vector<Element>& elements() const { return elements_; }
    [[nodiscard]] const std::vector<NlPort>& ports() const { return ports_; }
    [[nodiscard]] std::optional<std::size_t> find_element(std::string_view id) const;
    [[nodiscard]] std::optional<std::size_t> find_port(std::string_view id) const;
    [[nodiscard]] const Element& element(std::string_view id) const;

    /// Non-ground node names in order of first appearance.
    [[nodiscard]] std::vector<std::string> nodes() const;

    /// Indices into elements() of capacitors and inductors, in netlist order.
    [[nodiscard]] std::vector<std::size_t> state_elements() const;
    /// Indices of independent voltage and current sources, in netlist order.
    [[nodiscard]] std::vector<std::size_t> input_elements() const;
    [[nodiscard]] std::vector<std::size_t> switch_elements() const;
    [[nodiscard]] std::vector<std::size_t> diode_elements() const;

    /// Throws TopologyError on a missing ground, a disconnected graph, a loop
    /// made only of voltage-type branches or a cut-set made only of
    /// current-type branches.
    void validate() const;

private:
    void check_new_id(const std::string& id) const;

    std::vector<Element> elements_;
    std::vector<NlPort> ports_;
};

struct SwitchParams {
    Real r_on = 1e-3;
    Real r_off = 1e6;

    void validate() const;
};

/// Conduction state of every controlled switch and diode.
struct SwitchSignals {
    std::vector<bool> gates;
    std::vector<bool> diodes;

    /// Bit i is gate i, bit (gates.size() + j) is diode j.
    [[nodiscard]] std::uint64_t key() const;
    [[nodiscard]] bool operator==(const SwitchSignals&) const = default;
};

struct DiodeThresholds {
    Real v_on = 0.0;   ///< an off diode turns on above +v_on
    Real i_off = 0.0;  ///< an on diode turns off below -i_off
};

/// Matrices of one switching state.
struct StateSpaceEntry {
    std::uint64_t key = 0;
    Matrix A;
    Matrix B1;
    Matrix B2;
    Matrix C;
    Matrix D1;
    Matrix D2;
};

/// Builds the matrices of switching state `signals` by modified nodal analysis
/// with capacitors as voltage sources and inductors as current sources, then
/// eliminating the algebraic unknowns with a dense solve.
[[nodiscard]] StateSpaceEntry build_state_space(const Netlist& netlist,
                                                const SwitchParams& params,
                                                const SwitchSignals& signals,
                                                const std::vector<std::string>& probe_outputs = {});

/// Per-run view of a netlist: labels, output layout and a lazily filled,
/// thread-safe cache of StateSpaceEntry keyed by switching state.
class StateSpaceBank {
public:
    StateSpaceBank(std::shared_ptr<const Netlist> netlist, SwitchParams params,
                   std::vector<std::string> probe_outputs = {});

    [[nodiscard]] const Netlist& netlist() const { return *netlist_; }
    [[nodiscard]] const SwitchParams& switch_params() const { return params_; }

    [[nodiscard]] Index num_states() const { return static_cast<Index>(state_labels_.size()); }
    [[nodiscard]] Index num_inputs() const { return static_cast<Index>(input_labels_.size()); }
    [[nodiscard]] Index num_ports() const { return static_cast<Index>(port_labels_.size()); }
    [[nodiscard]] Index num_outputs() const { return static_cast<Index>(output_labels_.size()); }
    [[nodiscard]] std::size_t num_switches() const { return num_switches_; }
    [[nodiscard]] std::size_t num_diodes() const { return num_diodes_; }

    [[nodiscard]] const std::vector<std::string>& state_labels() const { return state_labels_; }
    [[nodiscard]] const std::vector<std::string>& input_labels() const { return input_labels_; }
    [[nodiscard]] const std::vector<std::string>& port_labels() const { return port_labels_; }
    [[nodiscard]] const std::vector<std::string>& output_labels() const { return output_labels_; }

    [[nodiscard]] Index port_row(Index port) const { return port; }
    [[nodiscard]] Index diode_current_row(std::size_t diode) const {
        return num_ports() + 2 * static_cast<Index>(diode);
    }
    [[nodiscard]] Index diode_voltage_row(std::size_t diode) const {
        return diode_current_row(diode) + 1;
    }
    [[nodiscard]] Index probe_row(std::size_t probe) const {
        return num_ports() + 2 * static_cast<Index>(num_diodes_) + static_cast<Index>(probe);
    }
    [[nodiscard]] std::optional<Index> find_output(std::string_view label) const;
    [[nodiscard]] std::optional<Index> find_state(std::string_view label) const;

    /// Cached entry for `signals`; built on first use. Concurrent callers may
    /// both build; the first insertion wins and every caller gets that entry.
    [[nodiscard]] std::shared_ptr<const StateSpaceEntry> get(const SwitchSignals& signals) const;
    [[nodiscard]] std::size_t cached_entries() const;

    /// Writes [A B1 B2; C D1 D2] row-major with a labelled header.
    void export_csv(const StateSpaceEntry& entry, const std::filesystem::path& path) const;

private:
    std::shared_ptr<const Netlist> netlist_;
    SwitchParams params_;
    std::vector<std::string> probe_outputs_;
    std::size_t num_switches_ = 0;
    std::size_t num_diodes_ = 0;
    std::vector<std::string> state_labels_;
    std::vector<std::string> input_labels_;
    std::vector<std::string> port_labels_;
    std::vector<std::string> output_labels_;

    mutable std::mutex mutex_;
    mutable std::unordered_map<std::uint64_t, std::shared_ptr<const StateSpaceEntry>> cache_;
};

/// Switch/diode state for the next step: gates are copied, each diode follows
/// the hysteresis rule using its current and voltage in `outputs`.
[[nodiscard]] SwitchSignals determine_switching_state(const std::vector<bool>& gates,
                                                      std::span<const Real> outputs,
                                                      const std::vector<bool>& diodes,
                                                      const StateSpaceBank& bank,
                                                      const DiodeThresholds& thresholds = {});

[[nodiscard]] Vector eval_output(const StateSpaceEntry& entry, const Vector& x, const Vector& u,
                                 const Vector& y_nl);
[[nodiscard]] Vector eval_derivative(const StateSpaceEntry& entry, const Vector& x,
                                     const Vector& u, const Vector& y_nl);

}  // namespace imexsim
