#pragma once

// =============================================================================
// Circuit integrators and the fixed-step run loop
// =============================================================================
// Joint state z = [x_l; psi]. For one step the switching state k and the
// inductances are frozen, which makes the coupled system linear:
//
//     dx/dt   = A x + B1 u + B2 Minv psi
//     dpsi/dt = Cp x + D1p u + D2p Minv psi        (Cp, D1p, D2p: port rows)
//
// A is integrated implicitly, the interface terms explicitly.
//
//   imex      stage 1  psi_h = psi + h/2 y(t_n)
//                      x_h   = (I - h/2 A)^-1 (x + h/2 [B1 u(t_h) + B2 i(t_n)])
//             stage 2  psi'  = psi + h y(t_h)
//                      x'    = x + h (A x_h + B1 u(t_h) + B2 i(t_h))
//   latency            psi'  = psi + h y(t_n)
//                      x'    = (I - h A)^-1 (x + h [B1 u(t_n+1) + B2 i(t_n)])
//   forward-euler      everything explicit at t_n
//   trapezoidal        fully implicit, Newton on the joint state
// =============================================================================

#include "imexsim/circuit_model.hpp"
#include "imexsim/coupling.hpp"
#include "imexsim/fixed_point.hpp"
#include "imexsim/split_system.hpp"
#include "imexsim/waveform.hpp"

#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace imexsim {

/// Which interface update is written first inside a stage. Both read only
/// pre-stage values, so the order must not change any result.
enum class StageOrder { NlFirst, PwlFirst };

struct Backend {
    enum class Kind { Float64, FixedPoint };
    Kind kind = Kind::Float64;
    fixed::Format format{};

    static Backend float64() { return {}; }
    static Backend fixed_point(int total_bits = 64, int integer_bits = 24) {
        return {Kind::FixedPoint, {total_bits, integer_bits}};
    }
    [[nodiscard]] bool is_fixed() const { return kind == Kind::FixedPoint; }
    /// "float64" or "fixed(64,24)".
    [[nodiscard]] std::string name() const;
};

/// Accepts float64, fixed (64,24 default), fixed(T,I) and fixed:T:I.
[[nodiscard]] Backend backend_from_string(std::string_view text);

struct SolverConfig {
    Method method = Method::Imex;
    Real h = 75e-9;
    Backend backend;
    NewtonSettings newton;
    std::size_t decimation = 1;  ///< record every n-th step (the final step always)
    StageOrder stage_order = StageOrder::NlFirst;

    void validate() const;
};

/// Fills u(t) in the order of Netlist::input_elements().
using InputFn = std::function<void(Real t, Vector& u)>;

/// Frozen linear system over [x_l; psi], used by the analysis tools.
struct FrozenSystem {
    Matrix A;
    Matrix B1;
    Matrix B2;
    Matrix Cp;
    Matrix D1p;
    Matrix D2p;
    Matrix Minv;

    [[nodiscard]] static FrozenSystem from_entry(const StateSpaceEntry& entry, Index num_ports,
                                                 const Matrix& Minv);
    /// Entry whose outputs are just the port rows, so a stepper can run it.
    [[nodiscard]] StateSpaceEntry as_entry() const;
    [[nodiscard]] Index num_states() const { return A.rows(); }
    [[nodiscard]] Index num_ports() const { return Minv.rows(); }
};

// -----------------------------------------------------------------------------
// Step kernels
// -----------------------------------------------------------------------------

/// Double-precision kernel. Factorizations are cached per switching-state key
/// (the step size is fixed for the lifetime of the object); the trapezoidal
/// Jacobian additionally depends on Minv and is refactored when `minv_version`
/// changes.
class CircuitStepper {
public:
    CircuitStepper(Index num_states, Index num_inputs, Index num_ports, const SolverConfig& config);

    void step(const StateSpaceEntry& entry, const Matrix& Minv, std::uint64_t minv_version, Real t,
              const InputFn& inputs, Vector& x, Vector& psi);

    [[nodiscard]] int last_newton_iterations() const { return newton_last_; }
    [[nodiscard]] int max_newton_iterations() const { return newton_max_; }
    [[nodiscard]] std::size_t cached_factorizations() const { return cache_.size(); }

private:
    struct KeyData {
        Eigen::PartialPivLU<Eigen::MatrixXd> lu;  // I - h/2 A (imex) or I - h A (latency)
    };
    struct TrapData {
        std::uint64_t key = 0;
        std::uint64_t minv_version = 0;
        bool valid = false;
        Eigen::MatrixXd J;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu;  // I - h/2 J
    };

    const KeyData& key_data(const StateSpaceEntry& entry);
    void port_voltages(const StateSpaceEntry& entry, const Vector& x, const Vector& u,
                       const Vector& i_nl, Vector& out) const;
    void trapezoidal(const StateSpaceEntry& entry, const Matrix& Minv, std::uint64_t minv_version,
                     Real t, const InputFn& inputs, Vector& x, Vector& psi);

    Index n_;
    Index mu_;
    Index m_;
    SolverConfig config_;
    std::unordered_map<std::uint64_t, KeyData> cache_;
    TrapData trap_;
    int newton_last_ = 0;
    int newton_max_ = 0;

    // Scratch buffers: the per-step path allocates nothing.
    Vector u0_, uh_, i0_, ih_, v0_, vh_, xh_, psih_, rhs_;
    Vector z_, w_, f_, base_, delta_;
};

/// Fixed-point imex kernel. Every discrete matrix is computed in double once
/// per switching state and quantized; the per-step path is multiply-accumulate
/// on raw integers only.
class FixedImexStepper {
public:
    FixedImexStepper(Index num_states, Index num_inputs, Index num_ports, Real h,
                     fixed::Format format, StageOrder order = StageOrder::NlFirst);

    void set_state(const Vector& x, const Vector& psi);
    void get_state(Vector& x, Vector& psi) const;
    void step(const StateSpaceEntry& entry, const Matrix& Minv, std::uint64_t minv_version, Real t,
              const InputFn& inputs);

    [[nodiscard]] const fixed::SaturationLog& saturation() const { return alu_.saturation(); }
    [[nodiscard]] const fixed::Arithmetic& arithmetic() const { return alu_; }

private:
    struct KeyData {
        std::vector<fixed::Raw> stage1;  // [P | P h/2 B1 | P h/2 B2], n x (n+mu+m)
        std::vector<fixed::Raw> stage2;  // [hA | hB1 | hB2], n x (n+mu+m)
        std::vector<fixed::Raw> ports;   // [Cp | D1p | D2p], m x (n+mu+m)
    };
    const KeyData& key_data(const StateSpaceEntry& entry);
    void quantize_into(const Vector& v, std::span<fixed::Raw> out);

    Index n_;
    Index mu_;
    Index m_;
    Real h_;
    StageOrder order_;
    fixed::Arithmetic alu_;
    fixed::Raw half_h_;
    fixed::Raw full_h_;
    std::unordered_map<std::uint64_t, KeyData> cache_;
    std::uint64_t minv_version_ = 0;
    bool minv_valid_ = false;
    std::vector<fixed::Raw> minv_;

    std::vector<fixed::Raw> x_, psi_, xh_, psih_;
    std::vector<fixed::Raw> in_;   // [x | u | i_nl] operand of the concatenated matrices
    std::vector<fixed::Raw> v_;    // port voltages
    Vector u_;
};

// -----------------------------------------------------------------------------
// Simulation model and run loop
// -----------------------------------------------------------------------------

class Controller {
public:
    virtual ~Controller() = default;
    [[nodiscard]] virtual std::unique_ptr<Controller> clone() const = 0;
    /// Resolves switch ids and measured probes; called once per run.
    virtual void bind(const Netlist& netlist, const std::vector<std::string>& probe_names) = 0;
    /// Writes the gates this controller owns, indexed like Netlist::switch_elements().
    /// `probes` are the probe values at t under the previous switching state.
    virtual void update(Real t, std::span<const Real> probes, std::vector<bool>& gates) = 0;
    /// Periodic events (name, period in s) for the step commensurability check.
    [[nodiscard]] virtual std::vector<std::pair<std::string, Real>> periods() const { return {}; }
};

/// Index of switch `id` among Netlist::switch_elements(); throws ConfigError.
[[nodiscard]] std::size_t switch_index(const Netlist& netlist, std::string_view id);

/// A recorded signal. `signal` is "V(name)"/"I(name)" (element, port or node)
/// or "psi(port)" for a flux linkage.
struct ProbeSpec {
    std::string name;
    std::string unit;
    std::string signal;
};

struct SimulationModel {
    std::string name;
    std::shared_ptr<const Netlist> netlist;
    SwitchParams switch_params;
    DiodeThresholds diode_thresholds;
    InputFn inputs;  ///< empty: every source holds its element value
    std::shared_ptr<const InductanceTable> table;  ///< required when the netlist has ports
    MotionProfile motion = MotionProfile::stationary(0.0);
    std::vector<ProbeSpec> probes;
    std::vector<std::shared_ptr<const Controller>> controllers;
    /// Initial values by state label ("v(C1)", "i(L1)") or "psi(port)".
    std::map<std::string, Real> initial_conditions;
    /// Probe name -> magnitude limit beyond which the run counts as diverged.
    std::map<std::string, Real> divergence_limits;

    void validate() const;
};

struct SimState {
    std::size_t step = 0;
    Real t = 0.0;
    Vector x;
    Vector psi;
    SwitchSignals signals;
    std::uint64_t key = 0;
    Real x_pos = 0.0;
    Inductances inductances;
};

/// One run: owns the per-run mutable state, the kernels and the controllers.
class Simulation {
public:
    Simulation(const SimulationModel& model, const SolverConfig& config);

    [[nodiscard]] const SimState& state() const { return state_; }
    [[nodiscard]] const StateSpaceBank& bank() const { return *bank_; }
    [[nodiscard]] const SolverConfig& config() const { return config_; }
    [[nodiscard]] const std::vector<std::string>& probe_names() const { return probe_names_; }
    [[nodiscard]] const std::vector<std::string>& probe_units() const { return probe_units_; }
    [[nodiscard]] const std::vector<std::string>& warnings() const { return warnings_; }

    /// Step boundary at the current t: inductance lookup, controller
    /// sampling, switching-state resolution and probe evaluation.
    void prepare();
    /// Probe values at the current t (valid after prepare()).
    [[nodiscard]] std::span<const Real> probes() const { return probe_values_; }
    /// Advances one step with the prepared switching state and inductances.
    void step();

    /// First non-finite state entry, if any.
    [[nodiscard]] std::optional<std::string> non_finite_state() const;
    /// First probe beyond its divergence limit, if any.
    [[nodiscard]] std::optional<std::string> probe_over_limit() const;

    [[nodiscard]] std::size_t switching_states_seen() const { return bank_->cached_entries(); }
    [[nodiscard]] int max_newton_iterations() const;
    [[nodiscard]] fixed::SaturationLog saturation() const;

private:
    void resolve_switching(const Vector& u);
    void evaluate_probes();
    void update_coupling();

    SimulationModel model_;
    SolverConfig config_;
    std::shared_ptr<StateSpaceBank> bank_;
    std::vector<std::unique_ptr<Controller>> controllers_;
    std::unique_ptr<CircuitStepper> stepper_;
    std::unique_ptr<FixedImexStepper> fixed_stepper_;

    SimState state_;
    std::shared_ptr<const StateSpaceEntry> entry_;
    Matrix Minv_;
    std::uint64_t minv_version_ = 0;
    bool coupling_valid_ = false;

    struct ProbeBinding {
        bool flux = false;
        Index index = 0;
    };
    std::vector<ProbeBinding> bindings_;
    std::vector<std::string> probe_names_;
    std::vector<std::string> probe_units_;
    std::vector<Real> probe_values_;
    std::vector<Real> limits_;
    std::vector<std::string> warnings_;

    InputFn inputs_;
    Vector u_, y_, i_nl_;
    std::vector<bool> gates_;
};

struct RunOptions {
    Real record_from = 0.0;  ///< samples before this time are not stored
    std::function<void(Real fraction)> progress;
};

/// Executes the fixed-step pipeline from t = 0 to t_end. Divergence ends the
/// run early and is reported through WaveformSet::divergence with the data
/// recorded so far; other failures throw.
[[nodiscard]] WaveformSet run(const SimulationModel& model, const SolverConfig& config, Real t_end,
                              const RunOptions& options = {});

}  // namespace imexsim
