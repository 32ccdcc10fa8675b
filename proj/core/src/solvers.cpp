#include "imexsim/solvers.hpp"

#include "imexsim/csv.hpp"
#include "imexsim/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace imexsim {

std::string_view to_string(Method method) {
    switch (method) {
    case Method::Imex: return "imex";
    case Method::Latency: return "latency";
    case Method::ForwardEuler: return "forward-euler";
    case Method::Trapezoidal: return "trapezoidal-oracle";
    }
    return "unknown";
}

Method method_from_string(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "imex") return Method::Imex;
    if (s == "latency" || s == "latency-based") return Method::Latency;
    if (s == "forward-euler" || s == "fe" || s == "euler") return Method::ForwardEuler;
    if (s == "trapezoidal-oracle" || s == "trapezoidal" || s == "trap" || s == "oracle") {
        return Method::Trapezoidal;
    }
    throw ConfigError("unknown method '" + std::string(text) +
                      "' (available: imex, latency, forward-euler, trapezoidal-oracle)");
}

std::string Backend::name() const {
    if (!is_fixed()) {
        return "float64";
    }
    return "fixed(" + std::to_string(format.total_bits) + "," + std::to_string(format.integer_bits) +
           ")";
}

Backend backend_from_string(std::string_view text) {
    std::string s(text);
    s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }),
            s.end());
    if (s == "float64" || s == "double") {
        return Backend::float64();
    }
    if (s == "fixed" || s == "fixed-point") {
        return Backend::fixed_point();
    }
    for (const char* prefix : {"fixed(", "fixed-point(", "fixed:", "fixed-point:"}) {
        const std::string p(prefix);
        if (s.rfind(p, 0) != 0) {
            continue;
        }
        auto body = s.substr(p.size());
        if (p.back() == '(') {
            if (body.empty() || body.back() != ')') break;
            body.pop_back();
        }
        std::replace(body.begin(), body.end(), ':', ',');
        auto comma = body.find(',');
        if (comma == std::string::npos) break;
        try {
            Backend b = Backend::fixed_point(std::stoi(body.substr(0, comma)),
                                             std::stoi(body.substr(comma + 1)));
            b.format.validate();
            return b;
        } catch (const std::logic_error&) {
            break;
        }
    }
    throw ConfigError("unknown backend '" + std::string(text) +
                      "' (available: float64, fixed, fixed(TOTAL,INTEGER))");
}

void SolverConfig::validate() const {
    if (!(h > 0.0) || !std::isfinite(h)) {
        throw ConfigError("step size h must be positive");
    }
    if (decimation == 0) {
        throw ConfigError("decimation must be at least 1");
    }
    if (newton.max_iter < 1 || !(newton.tol > 0.0)) {
        throw ConfigError("Newton settings need max_iter >= 1 and tol > 0");
    }
    if (backend.is_fixed()) {
        backend.format.validate();
        if (method != Method::Imex) {
            throw ConfigError("the fixed-point backend is only available for the imex method");
        }
    }
}

FrozenSystem FrozenSystem::from_entry(const StateSpaceEntry& entry, Index num_ports,
                                      const Matrix& Minv) {
    if (Minv.rows() != num_ports || Minv.cols() != num_ports || entry.C.rows() < num_ports) {
        throw DimensionError("frozen system: port count does not match Minv or outputs");
    }
    return {entry.A,
            entry.B1,
            entry.B2,
            entry.C.topRows(num_ports),
            entry.D1.topRows(num_ports),
            entry.D2.topRows(num_ports),
            Minv};
}

StateSpaceEntry FrozenSystem::as_entry() const {
    StateSpaceEntry e;
    e.A = A;
    e.B1 = B1;
    e.B2 = B2;
    e.C = Cp;
    e.D1 = D1p;
    e.D2 = D2p;
    return e;
}

// -----------------------------------------------------------------------------
// CircuitStepper
// -----------------------------------------------------------------------------

CircuitStepper::CircuitStepper(Index num_states, Index num_inputs, Index num_ports,
                               const SolverConfig& config)
    : n_(num_states), mu_(num_inputs), m_(num_ports), config_(config) {
    config_.validate();
    u0_.setZero(mu_);
    uh_.setZero(mu_);
    i0_.setZero(m_);
    ih_.setZero(m_);
    v0_.setZero(m_);
    vh_.setZero(m_);
    xh_.setZero(n_);
    psih_.setZero(m_);
    rhs_.setZero(n_);
    z_.setZero(n_ + m_);
    w_.setZero(n_ + m_);
    f_.setZero(n_ + m_);
    base_.setZero(n_ + m_);
    delta_.setZero(n_ + m_);
}

const CircuitStepper::KeyData& CircuitStepper::key_data(const StateSpaceEntry& entry) {
    auto it = cache_.find(entry.key);
    if (it != cache_.end()) {
        return it->second;
    }
    const Real factor = config_.method == Method::Imex ? config_.h / 2 : config_.h;
    const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n_, n_) - factor * Eigen::MatrixXd(entry.A);
    KeyData data;
    Eigen::FullPivLU<Eigen::MatrixXd> check(M);
    if (check.rank() < n_) {
        throw SingularMatrixError("implicit matrix I - " + csv::format_real(factor) +
                                      " A is singular for switching state " +
                                      std::to_string(entry.key),
                                  entry.key);
    }
    data.lu.compute(M);
    return cache_.emplace(entry.key, std::move(data)).first->second;
}

void CircuitStepper::port_voltages(const StateSpaceEntry& entry, const Vector& x, const Vector& u,
                                   const Vector& i_nl, Vector& out) const {
    out.noalias() = entry.C.topRows(m_) * x;
    out.noalias() += entry.D1.topRows(m_) * u;
    out.noalias() += entry.D2.topRows(m_) * i_nl;
}

void CircuitStepper::step(const StateSpaceEntry& entry, const Matrix& Minv,
                          std::uint64_t minv_version, Real t, const InputFn& inputs, Vector& x,
                          Vector& psi) {
    if (x.size() != n_ || psi.size() != m_ || entry.A.rows() != n_ || Minv.rows() != m_) {
        throw DimensionError("circuit stepper: state, matrix or coupling size mismatch");
    }
    const Real h = config_.h;
    const bool nl_first = config_.stage_order == StageOrder::NlFirst;

    switch (config_.method) {
    case Method::Imex: {
        const auto& kd = key_data(entry);
        inputs(t, u0_);
        inputs(t + h / 2, uh_);
        // Stage 1: interface values at t_n, then the half step.
        i0_.noalias() = Minv * psi;
        port_voltages(entry, x, u0_, i0_, v0_);
        auto nl1 = [&] { psih_ = psi + (h / 2) * v0_; };
        auto pwl1 = [&] {
            rhs_ = x;
            rhs_.noalias() += (h / 2) * (entry.B1 * uh_);
            rhs_.noalias() += (h / 2) * (entry.B2 * i0_);
            xh_ = kd.lu.solve(rhs_);
        };
        if (nl_first) { nl1(); pwl1(); } else { pwl1(); nl1(); }

        // Stage 2: interface values at t_{n+1/2}, then the full explicit step.
        ih_.noalias() = Minv * psih_;
        port_voltages(entry, xh_, uh_, ih_, vh_);
        auto nl2 = [&] { psi += h * vh_; };
        auto pwl2 = [&] {
            rhs_.noalias() = entry.A * xh_;
            rhs_.noalias() += entry.B1 * uh_;
            rhs_.noalias() += entry.B2 * ih_;
            x += h * rhs_;
        };
        if (nl_first) { nl2(); pwl2(); } else { pwl2(); nl2(); }
        break;
    }
    case Method::Latency: {
        const auto& kd = key_data(entry);
        inputs(t, u0_);
        inputs(t + h, uh_);
        i0_.noalias() = Minv * psi;
        port_voltages(entry, x, u0_, i0_, v0_);
        auto nl = [&] { psi += h * v0_; };
        auto pwl = [&] {
            rhs_ = x;
            rhs_.noalias() += h * (entry.B1 * uh_);
            rhs_.noalias() += h * (entry.B2 * i0_);
            x = kd.lu.solve(rhs_);
        };
        if (nl_first) { nl(); pwl(); } else { pwl(); nl(); }
        break;
    }
    case Method::ForwardEuler: {
        inputs(t, u0_);
        i0_.noalias() = Minv * psi;
        port_voltages(entry, x, u0_, i0_, v0_);
        rhs_.noalias() = entry.A * x;
        rhs_.noalias() += entry.B1 * u0_;
        rhs_.noalias() += entry.B2 * i0_;
        x += h * rhs_;
        psi += h * v0_;
        break;
    }
    case Method::Trapezoidal:
        trapezoidal(entry, Minv, minv_version, t, inputs, x, psi);
        break;
    }
}

void CircuitStepper::trapezoidal(const StateSpaceEntry& entry, const Matrix& Minv,
                                 std::uint64_t minv_version, Real t, const InputFn& inputs,
                                 Vector& x, Vector& psi) {
    const Real h = config_.h;
    const Index N = n_ + m_;
    if (!trap_.valid || trap_.key != entry.key || trap_.minv_version != minv_version) {
        // Jacobian of the frozen joint system; constant within the step.
        trap_.J.setZero(N, N);
        trap_.J.topLeftCorner(n_, n_) = entry.A;
        trap_.J.topRightCorner(n_, m_) = entry.B2 * Minv;
        trap_.J.bottomLeftCorner(m_, n_) = entry.C.topRows(m_);
        trap_.J.bottomRightCorner(m_, m_) = entry.D2.topRows(m_) * Minv;
        const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(N, N) - (h / 2) * trap_.J;
        Eigen::FullPivLU<Eigen::MatrixXd> check(M);
        if (check.rank() < N) {
            throw SingularMatrixError("trapezoidal Jacobian is singular for switching state " +
                                          std::to_string(entry.key),
                                      entry.key);
        }
        trap_.lu.compute(M);
        trap_.key = entry.key;
        trap_.minv_version = minv_version;
        trap_.valid = true;
    }

    // f(z, t) = J z + [B1 u(t); D1p u(t)]
    auto eval = [&](const Vector& z, const Vector& u, Vector& out) {
        out.noalias() = trap_.J * z;
        out.head(n_).noalias() += entry.B1 * u;
        out.tail(m_).noalias() += entry.D1.topRows(m_) * u;
    };

    inputs(t, u0_);
    inputs(t + h, uh_);
    z_.head(n_) = x;
    z_.tail(m_) = psi;
    eval(z_, u0_, f_);
    base_ = z_ + (h / 2) * f_;
    w_ = z_;

    std::vector<Real> history;
    for (int it = 1; it <= config_.newton.max_iter; ++it) {
        eval(w_, uh_, f_);
        // residual r = w - h/2 f(w) - base, delta = -(I - h/2 J)^-1 r
        f_ = base_ + (h / 2) * f_ - w_;
        delta_ = trap_.lu.solve(f_);
        w_ += delta_;
        const Real size = delta_.cwiseAbs().maxCoeff();
        history.push_back(size);
        if (!std::isfinite(size)) {
            break;
        }
        if (size <= config_.newton.tol * std::max<Real>(1.0, w_.cwiseAbs().maxCoeff())) {
            newton_last_ = it;
            newton_max_ = std::max(newton_max_, it);
            x = w_.head(n_);
            psi = w_.tail(m_);
            return;
        }
    }
    throw NewtonError("trapezoidal Newton iteration did not converge at t=" + csv::format_real(t),
                      std::move(history));
}

// -----------------------------------------------------------------------------
// FixedImexStepper
// -----------------------------------------------------------------------------

FixedImexStepper::FixedImexStepper(Index num_states, Index num_inputs, Index num_ports, Real h,
                                   fixed::Format format, StageOrder order)
    : n_(num_states), mu_(num_inputs), m_(num_ports), h_(h), order_(order), alu_(format) {
    if (!(h > 0.0)) {
        throw ConfigError("step size h must be positive");
    }
    half_h_ = alu_.quantize(h / 2);
    full_h_ = alu_.quantize(h);
    const auto n = static_cast<std::size_t>(n_);
    const auto m = static_cast<std::size_t>(m_);
    x_.assign(n, 0);
    xh_.assign(n, 0);
    psi_.assign(m, 0);
    psih_.assign(m, 0);
    in_.assign(static_cast<std::size_t>(n_ + mu_ + m_), 0);
    v_.assign(m, 0);
    minv_.assign(m * m, 0);
    u_.setZero(mu_);
}

void FixedImexStepper::quantize_into(const Vector& v, std::span<fixed::Raw> out) {
    for (Index i = 0; i < v.size(); ++i) {
        out[static_cast<std::size_t>(i)] = alu_.quantize(v(i));
    }
}

void FixedImexStepper::set_state(const Vector& x, const Vector& psi) {
    if (x.size() != n_ || psi.size() != m_) {
        throw DimensionError("fixed stepper: state size mismatch");
    }
    quantize_into(x, x_);
    quantize_into(psi, psi_);
}

void FixedImexStepper::get_state(Vector& x, Vector& psi) const {
    x.resize(n_);
    psi.resize(m_);
    for (Index i = 0; i < n_; ++i) x(i) = alu_.to_real(x_[static_cast<std::size_t>(i)]);
    for (Index i = 0; i < m_; ++i) psi(i) = alu_.to_real(psi_[static_cast<std::size_t>(i)]);
}

const FixedImexStepper::KeyData& FixedImexStepper::key_data(const StateSpaceEntry& entry) {
    auto it = cache_.find(entry.key);
    if (it != cache_.end()) {
        return it->second;
    }
    const Index cols = n_ + mu_ + m_;
    const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n_, n_) - (h_ / 2) * Eigen::MatrixXd(entry.A);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (lu.rank() < n_) {
        throw SingularMatrixError("implicit matrix I - h/2 A is singular for switching state " +
                                      std::to_string(entry.key),
                                  entry.key);
    }
    const Eigen::MatrixXd P = lu.inverse();

    Matrix s1(n_, cols), s2(n_, cols), pr(m_, cols);
    s1 << P, P * ((h_ / 2) * Eigen::MatrixXd(entry.B1)), P * ((h_ / 2) * Eigen::MatrixXd(entry.B2));
    s2 << h_ * entry.A, h_ * entry.B1, h_ * entry.B2;
    pr << entry.C.topRows(m_), entry.D1.topRows(m_), entry.D2.topRows(m_);

    auto quantize_matrix = [&](const Matrix& src) {
        std::vector<fixed::Raw> raw(static_cast<std::size_t>(src.size()));
        for (Index i = 0; i < src.rows(); ++i) {
            for (Index j = 0; j < src.cols(); ++j) {
                raw[static_cast<std::size_t>(i * src.cols() + j)] = alu_.quantize(src(i, j));
            }
        }
        return raw;
    };
    KeyData data{quantize_matrix(s1), quantize_matrix(s2), quantize_matrix(pr)};
    return cache_.emplace(entry.key, std::move(data)).first->second;
}

void FixedImexStepper::step(const StateSpaceEntry& entry, const Matrix& Minv,
                            std::uint64_t minv_version, Real t, const InputFn& inputs) {
    if (entry.A.rows() != n_ || Minv.rows() != m_) {
        throw DimensionError("fixed stepper: matrix or coupling size mismatch");
    }
    alu_.set_time(t);
    if (!minv_valid_ || minv_version != minv_version_) {
        for (Index i = 0; i < m_; ++i) {
            for (Index j = 0; j < m_; ++j) {
                minv_[static_cast<std::size_t>(i * m_ + j)] = alu_.quantize(Minv(i, j));
            }
        }
        minv_version_ = minv_version;
        minv_valid_ = true;
    }
    const auto& kd = key_data(entry);

    const auto n = static_cast<std::size_t>(n_);
    const auto mu = static_cast<std::size_t>(mu_);
    const auto m = static_cast<std::size_t>(m_);
    const auto cols = n + mu + m;
    std::span<fixed::Raw> in(in_);
    auto in_x = in.subspan(0, n);
    auto in_u = in.subspan(n, mu);
    auto in_i = in.subspan(n + mu, m);

    // Stage 1: operand [x; u(t_n); Minv psi] for the port voltages ...
    std::copy(x_.begin(), x_.end(), in_x.begin());
    alu_.matvec(minv_, m, m, psi_, in_i);
    inputs(t, u_);
    quantize_into(u_, in_u);
    alu_.matvec(kd.ports, m, cols, in_, v_);
    // ... and [x; u(t_h); Minv psi] for the implicit half step.
    inputs(t + h_ / 2, u_);
    quantize_into(u_, in_u);
    auto nl1 = [&] {
        for (std::size_t i = 0; i < m; ++i) psih_[i] = alu_.add(psi_[i], alu_.mul(half_h_, v_[i]));
    };
    auto pwl1 = [&] { alu_.matvec(kd.stage1, n, cols, in_, xh_); };
    if (order_ == StageOrder::NlFirst) { nl1(); pwl1(); } else { pwl1(); nl1(); }

    // Stage 2: operand [x_h; u(t_h); Minv psi_h].
    std::copy(xh_.begin(), xh_.end(), in_x.begin());
    alu_.matvec(minv_, m, m, psih_, in_i);
    alu_.matvec(kd.ports, m, cols, in_, v_);
    auto nl2 = [&] {
        for (std::size_t i = 0; i < m; ++i) psi_[i] = alu_.add(psi_[i], alu_.mul(full_h_, v_[i]));
    };
    auto pwl2 = [&] { alu_.matvec_add(kd.stage2, n, cols, in_, x_, x_); };
    if (order_ == StageOrder::NlFirst) { nl2(); pwl2(); } else { pwl2(); nl2(); }
}

// -----------------------------------------------------------------------------
// Simulation
// -----------------------------------------------------------------------------

std::size_t switch_index(const Netlist& netlist, std::string_view id) {
    const auto switches = netlist.switch_elements();
    for (std::size_t s = 0; s < switches.size(); ++s) {
        if (netlist.elements()[switches[s]].id == id) {
            return s;
        }
    }
    throw ConfigError("no controlled switch named '" + std::string(id) + "'");
}

namespace {
bool is_flux_signal(const std::string& signal, std::string& port) {
    if (signal.size() > 5 && (signal.rfind("psi(", 0) == 0 || signal.rfind("Psi(", 0) == 0) &&
        signal.back() == ')') {
        port = signal.substr(4, signal.size() - 5);
        return true;
    }
    return false;
}
}  // namespace

void SimulationModel::validate() const {
    if (!netlist) {
        throw ConfigError("simulation model '" + name + "' has no netlist");
    }
    netlist->validate();
    const auto& ports = netlist->ports();
    if (!ports.empty()) {
        if (ports.size() != 3) {
            throw ConfigError("the magnetic coupling needs exactly 3 ports, netlist has " +
                              std::to_string(ports.size()));
        }
        for (const auto& p : ports) {
            if (p.kind != PortKind::CurrentSource) {
                throw ConfigError("coupling port '" + p.id +
                                  "' must be a current-source port (its dual is the coil voltage)");
            }
        }
        if (!table) {
            throw ConfigError("simulation model '" + name + "' has coupling ports but no inductance table");
        }
        table->validate();
    }
    for (const auto& [probe, limit] : divergence_limits) {
        if (std::none_of(probes.begin(), probes.end(), [&](const ProbeSpec& p) { return p.name == probe; })) {
            throw ConfigError("divergence limit for unknown probe '" + probe + "'");
        }
        if (!(limit > 0.0)) {
            throw ConfigError("divergence limit for '" + probe + "' must be positive");
        }
    }
    for (std::size_t i = 0; i < probes.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (probes[i].name == probes[j].name) {
                throw ConfigError("duplicate probe name '" + probes[i].name + "'");
            }
        }
    }
}

Simulation::Simulation(const SimulationModel& model, const SolverConfig& config)
    : model_(model), config_(config) {
    model_.validate();
    config_.validate();
    const auto& netlist = *model_.netlist;

    std::vector<std::string> outputs;
    for (const auto& p : model_.probes) {
        std::string port;
        ProbeBinding b;
        if (is_flux_signal(p.signal, port)) {
            auto idx = netlist.find_port(port);
            if (!idx) {
                throw ConfigError("probe '" + p.name + "': no port named '" + port + "'");
            }
            b.flux = true;
            b.index = static_cast<Index>(*idx);
        } else {
            b.index = static_cast<Index>(outputs.size());
            outputs.push_back(p.signal);
        }
        bindings_.push_back(b);
        probe_names_.push_back(p.name);
        probe_units_.push_back(p.unit);
        auto lim = model_.divergence_limits.find(p.name);
        limits_.push_back(lim == model_.divergence_limits.end() ? std::numeric_limits<Real>::infinity()
                                                                : lim->second);
    }
    bank_ = std::make_shared<StateSpaceBank>(model_.netlist, model_.switch_params, outputs);
    probe_values_.assign(model_.probes.size(), 0.0);

    for (const auto& c : model_.controllers) {
        auto clone = c->clone();
        clone->bind(netlist, probe_names_);
        for (const auto& [what, period] : clone->periods()) {
            const Real ratio = period / config_.h;
            if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
                std::ostringstream msg;
                msg << what << " period " << csv::format_real(period) << " s is not an integer multiple of h = "
                    << csv::format_real(config_.h) << " s (ratio " << ratio
                    << "); edges are quantized to step boundaries";
                warnings_.push_back(msg.str());
            }
        }
        controllers_.push_back(std::move(clone));
    }

    const Index n = bank_->num_states();
    const Index mu = bank_->num_inputs();
    const Index m = bank_->num_ports();
    inputs_ = model_.inputs;
    if (!inputs_) {
        Vector constant(mu);
        const auto idx = netlist.input_elements();
        for (Index j = 0; j < mu; ++j) {
            constant(j) = netlist.elements()[idx[static_cast<std::size_t>(j)]].value;
        }
        inputs_ = [constant](Real, Vector& u) { u = constant; };
    }

    state_.x.setZero(n);
    state_.psi.setZero(m);
    for (const auto& [label, value] : model_.initial_conditions) {
        std::string port;
        if (is_flux_signal(label, port)) {
            auto idx = netlist.find_port(port);
            if (!idx) {
                throw ConfigError("initial condition for unknown port '" + port + "'");
            }
            state_.psi(static_cast<Index>(*idx)) = value;
        } else if (auto idx = bank_->find_state(label)) {
            state_.x(*idx) = value;
        } else {
            throw ConfigError("initial condition for unknown state '" + label +
                              "' (use v(capacitor), i(inductor) or psi(port))");
        }
    }
    state_.signals.gates.assign(bank_->num_switches(), false);
    state_.signals.diodes.assign(bank_->num_diodes(), false);
    gates_ = state_.signals.gates;
    Minv_.setZero(m, m);

    u_.setZero(mu);
    y_.setZero(bank_->num_outputs());
    i_nl_.setZero(m);

    if (config_.backend.is_fixed()) {
        fixed_stepper_ = std::make_unique<FixedImexStepper>(n, mu, m, config_.h, config_.backend.format,
                                                            config_.stage_order);
        fixed_stepper_->set_state(state_.x, state_.psi);
        // The integration datapath is authoritative; work from its quantized view.
        fixed_stepper_->get_state(state_.x, state_.psi);
    } else {
        stepper_ = std::make_unique<CircuitStepper>(n, mu, m, config_);
    }
}

void Simulation::update_coupling() {
    if (!model_.table) {
        return;
    }
    if (coupling_valid_ && model_.motion.is_stationary()) {
        return;
    }
    state_.x_pos = model_.motion.position(state_.t);
    const auto L = model_.table->inductance_at(state_.x_pos);
    if (!coupling_valid_ || !(L == state_.inductances)) {
        state_.inductances = L;
        Minv_ = inverse_inductance(L);
        ++minv_version_;
    }
    coupling_valid_ = true;
}

void Simulation::evaluate_probes() {
    for (std::size_t i = 0; i < bindings_.size(); ++i) {
        const auto& b = bindings_[i];
        probe_values_[i] = b.flux ? state_.psi(b.index) : y_(bank_->probe_row(static_cast<std::size_t>(b.index)));
    }
}

void Simulation::resolve_switching(const Vector& u) {
    SwitchSignals candidate{gates_, state_.signals.diodes};
    std::vector<bool> changed(candidate.diodes.size(), false);
    bool have_outputs = entry_ && candidate.key() == entry_->key && !controllers_.empty();
    for (;;) {
        if (!have_outputs) {
            entry_ = bank_->get(candidate);
            y_.noalias() = entry_->C * state_.x;
            y_.noalias() += entry_->D1 * u;
            y_.noalias() += entry_->D2 * i_nl_;
        }
        have_outputs = false;
        const auto next = determine_switching_state(candidate.gates,
                                                    std::span<const Real>(y_.data(), static_cast<std::size_t>(y_.size())),
                                                    candidate.diodes, *bank_,
                                                    model_.diode_thresholds);
        bool any = false;
        for (std::size_t d = 0; d < next.diodes.size(); ++d) {
            // A diode commutes at most once per step boundary.
            if (next.diodes[d] != candidate.diodes[d] && !changed[d]) {
                candidate.diodes[d] = next.diodes[d];
                changed[d] = true;
                any = true;
            }
        }
        if (!any) {
            break;
        }
    }
    state_.signals = std::move(candidate);
    state_.key = entry_->key;
}

void Simulation::prepare() {
    state_.t = static_cast<Real>(state_.step) * config_.h;
    update_coupling();
    inputs_(state_.t, u_);
    if (u_.size() != bank_->num_inputs()) {
        throw DimensionError("input function returned the wrong number of source values");
    }
    i_nl_.noalias() = Minv_ * state_.psi;

    if (!controllers_.empty()) {
        if (!entry_) {
            entry_ = bank_->get(state_.signals);
        }
        y_.noalias() = entry_->C * state_.x;
        y_.noalias() += entry_->D1 * u_;
        y_.noalias() += entry_->D2 * i_nl_;
        evaluate_probes();
        for (auto& c : controllers_) {
            c->update(state_.t, probe_values_, gates_);
        }
    }
    resolve_switching(u_);
    evaluate_probes();
}

void Simulation::step() {
    if (!entry_) {
        throw Error("Simulation::step called before prepare()");
    }
    try {
        if (fixed_stepper_) {
            fixed_stepper_->step(*entry_, Minv_, minv_version_, state_.t, inputs_);
            fixed_stepper_->get_state(state_.x, state_.psi);
        } else {
            stepper_->step(*entry_, Minv_, minv_version_, state_.t, inputs_, state_.x, state_.psi);
        }
    } catch (const SingularMatrixError& e) {
        throw SingularMatrixError(std::string(e.what()) + " at t=" + csv::format_real(state_.t),
                                  e.switching_key());
    }
    ++state_.step;
    state_.t = static_cast<Real>(state_.step) * config_.h;
}

std::optional<std::string> Simulation::non_finite_state() const {
    for (Index i = 0; i < state_.x.size(); ++i) {
        if (!std::isfinite(state_.x(i))) {
            return bank_->state_labels()[static_cast<std::size_t>(i)];
        }
    }
    for (Index i = 0; i < state_.psi.size(); ++i) {
        if (!std::isfinite(state_.psi(i))) {
            return "psi(" + bank_->port_labels()[static_cast<std::size_t>(i)] + ")";
        }
    }
    return std::nullopt;
}

std::optional<std::string> Simulation::probe_over_limit() const {
    for (std::size_t i = 0; i < probe_values_.size(); ++i) {
        if (!std::isfinite(probe_values_[i]) || std::abs(probe_values_[i]) > limits_[i]) {
            return probe_names_[i];
        }
    }
    return std::nullopt;
}

int Simulation::max_newton_iterations() const {
    return stepper_ ? stepper_->max_newton_iterations() : 0;
}

fixed::SaturationLog Simulation::saturation() const {
    return fixed_stepper_ ? fixed_stepper_->saturation() : fixed::SaturationLog{};
}

// -----------------------------------------------------------------------------
// run
// -----------------------------------------------------------------------------

WaveformSet run(const SimulationModel& model, const SolverConfig& config, Real t_end,
                const RunOptions& options) {
    if (!(t_end >= 0.0) || !std::isfinite(t_end)) {
        throw ConfigError("t_end must be a finite, non-negative time");
    }
    Simulation sim(model, config);
    const auto steps = static_cast<std::size_t>(std::llround(t_end / config.h));

    WaveformSet w(sim.probe_names(), sim.probe_units());
    const auto first = static_cast<std::size_t>(std::max<Real>(0.0, std::floor(options.record_from / config.h)));
    if (steps >= first) {
        w.reserve((steps - first) / config.decimation + 2);
    }
    w.metadata["scenario"] = model.name;
    w.metadata["method"] = std::string(to_string(config.method));
    w.metadata["backend"] = config.backend.name();
    w.metadata["h"] = csv::format_real(config.h);
    w.metadata["t_end"] = csv::format_real(static_cast<Real>(steps) * config.h);

    const std::size_t report_every = std::max<std::size_t>(1, steps / 100);
    for (;;) {
        sim.prepare();
        const auto& st = sim.state();
        const bool last = st.step == steps;
        if (st.step >= first && ((st.step - first) % config.decimation == 0 || last)) {
            w.append(st.t, sim.probes());
        }
        if (auto probe = sim.probe_over_limit()) {
            w.divergence = DivergenceInfo{st.t, *probe, "probe magnitude exceeded its divergence limit"};
            break;
        }
        if (last) {
            break;
        }
        sim.step();
        if (auto var = sim.non_finite_state()) {
            w.divergence = DivergenceInfo{sim.state().t, *var, "non-finite state"};
            break;
        }
        if (options.progress && st.step % report_every == 0) {
            options.progress(static_cast<Real>(st.step) / static_cast<Real>(std::max<std::size_t>(steps, 1)));
        }
    }

    w.metadata["steps"] = std::to_string(sim.state().step);
    w.metadata["switching_states"] = std::to_string(sim.switching_states_seen());
    if (config.method == Method::Trapezoidal) {
        w.metadata["newton_max_iterations"] = std::to_string(sim.max_newton_iterations());
    }
    if (config.backend.is_fixed()) {
        const auto sat = sim.saturation();
        w.metadata["saturation_count"] = std::to_string(sat.count);
        if (sat.first_time) {
            w.metadata["saturation_first_time"] = csv::format_real(*sat.first_time);
        }
    }
    for (std::size_t i = 0; i < sim.warnings().size(); ++i) {
        w.metadata["warning_" + std::to_string(i)] = sim.warnings()[i];
    }
    return w;
}

}  // namespace imexsim
