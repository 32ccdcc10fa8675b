#include "imexsim/analysis.hpp"

#include "imexsim/csv.hpp"
#include "imexsim/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace imexsim {

Complex amplification(Complex z0, Complex z1) {
    if (z1 == Complex(2.0, 0.0)) {
        throw PoleError("amplification factor has a pole at z1 = 2");
    }
    const Complex a = z0 + 1.0;
    return (a * a + 1.0 + z1 * a) / (2.0 - z1);
}

Complex stepped_amplification(Method method, Complex z0, Complex z1) {
    using Stepper = SplitStepper<Complex>;
    Stepper::Mat A(1, 1);
    A(0, 0) = z1;
    Stepper::Mat F(1, 1);
    F(0, 0) = z0;
    // Unit step size: z = h lambda with h = 1.
    Stepper stepper(
        A, [F](Real, const Stepper::Vec& z, Stepper::Vec& out) { out.noalias() = F * z; },
        [F](Real, const Stepper::Vec&, Stepper::Mat& out) { out = F; });
    stepper.set_step(1.0);
    Stepper::Vec z(1);
    z(0) = 1.0;
    stepper.step(method, 0.0, z);
    return z(0);
}

// -----------------------------------------------------------------------------
// Stability grid
// -----------------------------------------------------------------------------

void StabilityGridSpec::validate() const {
    if (re_points < 2 || im_points < 2) {
        throw ConfigError("stability grid needs at least 2 points per axis");
    }
    if (!(re_max > re_min) || !(im_max > im_min)) {
        throw ConfigError("stability grid ranges must be increasing");
    }
}

namespace {
std::vector<Real> linspace(Real a, Real b, std::size_t n) {
    std::vector<Real> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = a + (b - a) * static_cast<Real>(i) / static_cast<Real>(n - 1);
    }
    return out;
}

void write_comments(std::ostringstream& out, const std::vector<std::string>& comments) {
    for (const auto& c : comments) {
        out << "# " << c << "\n";
    }
}
}  // namespace

StabilityGrid stability_region(Complex z0, const StabilityGridSpec& spec) {
    spec.validate();
    StabilityGrid g;
    g.z0 = z0;
    g.spec = spec;
    g.re = linspace(spec.re_min, spec.re_max, spec.re_points);
    g.im = linspace(spec.im_min, spec.im_max, spec.im_points);
    g.abs_r.resize(spec.re_points * spec.im_points);
    g.pole.resize(g.abs_r.size());
    for (std::size_t j = 0; j < g.im.size(); ++j) {
        for (std::size_t i = 0; i < g.re.size(); ++i) {
            const auto k = j * g.re.size() + i;
            try {
                g.abs_r[k] = std::abs(amplification(z0, {g.re[i], g.im[j]}));
                g.pole[k] = false;
            } catch (const PoleError&) {
                g.abs_r[k] = std::numeric_limits<Real>::quiet_NaN();
                g.pole[k] = true;
            }
        }
    }
    return g;
}

std::string StabilityGrid::to_csv(const std::vector<std::string>& comments) const {
    std::ostringstream out;
    write_comments(out, comments);
    out << "z1_re,z1_im,absR\n";
    for (std::size_t j = 0; j < im.size(); ++j) {
        for (std::size_t i = 0; i < re.size(); ++i) {
            out << csv::format_real(re[i]) << ',' << csv::format_real(im[j]) << ','
                << (is_pole(i, j) ? std::string("nan") : csv::format_real(at(i, j))) << "\n";
        }
    }
    return out.str();
}

// -----------------------------------------------------------------------------
// One-step matrices
// -----------------------------------------------------------------------------

namespace {
Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& M, const char* what) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (lu.rank() < M.rows()) {
        throw SingularMatrixError(std::string(what) + " is singular", 0);
    }
    return lu.inverse();
}
}  // namespace

Matrix one_step_matrix(Method method, const FrozenSystem& s, Real h) {
    if (!(h > 0.0)) {
        throw ConfigError("step size must be positive");
    }
    const Index n = s.num_states();
    const Index m = s.num_ports();
    const Index N = n + m;
    Eigen::MatrixXd Aj = Eigen::MatrixXd::Zero(N, N);
    Aj.topLeftCorner(n, n) = s.A;
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(N, N);
    F.topRightCorner(n, m) = s.B2 * s.Minv;
    F.bottomLeftCorner(m, n) = s.Cp;
    F.bottomRightCorner(m, m) = s.D2p * s.Minv;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);

    Eigen::MatrixXd G;
    switch (method) {
    case Method::Imex: {
        const Eigen::MatrixXd P = checked_inverse(I - (h / 2) * Aj, "I - h/2 A");
        G = I + h * (Aj + F) * (P * (I + (h / 2) * F));
        break;
    }
    case Method::Latency:
        G = checked_inverse(I - h * Aj, "I - h A") * (I + h * F);
        break;
    case Method::ForwardEuler:
        G = I + h * (Aj + F);
        break;
    case Method::Trapezoidal: {
        const Eigen::MatrixXd J = Aj + F;
        G = checked_inverse(I - (h / 2) * J, "I - h/2 J") * (I + (h / 2) * J);
        break;
    }
    }
    return G;
}

Matrix stepped_one_step_matrix(Method method, const FrozenSystem& s, Real h) {
    const Index n = s.num_states();
    const Index m = s.num_ports();
    const Index mu = s.B1.cols();
    SolverConfig config;
    config.method = method;
    config.h = h;
    CircuitStepper stepper(n, mu, m, config);
    const auto entry = s.as_entry();
    const InputFn zero = [](Real, Vector& u) { u.setZero(); };

    Matrix G(n + m, n + m);
    Vector x(n), psi(m);
    for (Index j = 0; j < n + m; ++j) {
        x.setZero();
        psi.setZero();
        if (j < n) x(j) = 1.0; else psi(j - n) = 1.0;
        stepper.step(entry, s.Minv, 1, 0.0, zero, x, psi);
        G.col(j).head(n) = x;
        G.col(j).tail(m) = psi;
    }
    return G;
}

Real spectral_radius_power(const Matrix& G, Real tol, int max_iter) {
    if (G.rows() != G.cols()) {
        throw DimensionError("spectral radius needs a square matrix");
    }
    const Index N = G.rows();
    if (N == 0) {
        return 0.0;
    }
    // Growth rate of ||G^k v|| over windows of increasing length. A complex
    // dominant pair makes the per-step ratio oscillate, the windowed geometric
    // mean does not.
    Eigen::VectorXd v = Eigen::VectorXd::Ones(N) + 0.1 * Eigen::VectorXd::LinSpaced(N, 0.0, 1.0);
    v.normalize();
    const int window = 64;
    Real previous = -1.0;
    Real log_growth = 0.0;
    int in_window = 0;
    for (int it = 0; it < max_iter; ++it) {
        v = G * v;
        const Real norm = v.norm();
        if (norm == 0.0) {
            return 0.0;
        }
        if (!std::isfinite(norm)) {
            break;
        }
        log_growth += std::log(norm);
        v /= norm;
        if (++in_window == window) {
            const Real estimate = std::exp(log_growth / window);
            if (previous >= 0.0 && std::abs(estimate - previous) <= tol * std::max<Real>(1.0, estimate)) {
                return estimate;
            }
            previous = estimate;
            log_growth = 0.0;
            in_window = 0;
        }
    }
    throw Error("power iteration for the spectral radius did not settle");
}

Real spectral_radius(const Matrix& G) {
    if (G.rows() != G.cols()) {
        throw DimensionError("spectral radius needs a square matrix");
    }
    if (G.rows() == 0) {
        return 0.0;
    }
    if (G.allFinite()) {
        Eigen::EigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(G), false);
        if (solver.info() == Eigen::Success) {
            return solver.eigenvalues().cwiseAbs().maxCoeff();
        }
    }
    return spectral_radius_power(G);
}

// -----------------------------------------------------------------------------
// Convergence
// -----------------------------------------------------------------------------

ConvergenceProblem cubic_problem() {
    ConvergenceProblem p;
    p.name = "cubic";
    p.A = Matrix::Constant(1, 1, -5.0);
    p.explicit_part = [](Real, const Vector& z, Vector& out) { out(0) = -z(0) * z(0) * z(0); };
    p.explicit_jacobian = [](Real, const Vector& z, Matrix& out) { out(0, 0) = -3.0 * z(0) * z(0); };
    p.z0 = Vector::Constant(1, 1.0);
    p.t_end = 1.0;
    p.exact = [](Real t) { return Vector::Constant(1, 1.0 / std::sqrt(1.2 * std::exp(10.0 * t) - 0.2)); };
    return p;
}

ConvergenceProblem linear_decay_problem() {
    ConvergenceProblem p;
    p.name = "linear";
    p.A = Matrix::Constant(1, 1, -1.0);
    p.z0 = Vector::Constant(1, 1.0);
    p.t_end = 1.0;
    p.exact = [](Real t) { return Vector::Constant(1, std::exp(-t)); };
    return p;
}

ConvergenceProblem convergence_problem(std::string_view name) {
    if (name == "cubic") return cubic_problem();
    if (name == "linear") return linear_decay_problem();
    throw ConfigError("unknown convergence problem '" + std::string(name) + "' (available: cubic, linear)");
}

Real log_log_slope(const std::vector<Real>& x, const std::vector<Real>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw DimensionError("log-log fit needs at least two matching points");
    }
    Real mx = 0.0, my = 0.0;
    const auto n = static_cast<Real>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    Real sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Real dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

ConvergenceResult convergence_order(const ConvergenceProblem& problem, Method method,
                                    const std::vector<Real>& h_list) {
    if (h_list.size() < 3) {
        throw ConfigError("convergence study needs at least 3 step sizes");
    }
    ConvergenceResult r;
    r.problem = problem.name;
    r.method = method;
    const Vector exact = problem.exact(problem.t_end);
    const Real floor = 100.0 * std::numeric_limits<Real>::epsilon() *
                       std::max<Real>(1.0, exact.cwiseAbs().maxCoeff());

    for (Real h : h_list) {
        const Real steps_real = problem.t_end / h;
        const auto steps = static_cast<long long>(std::llround(steps_real));
        if (!(h > 0.0) || std::abs(steps_real - static_cast<Real>(steps)) > 1e-6 * steps_real) {
            throw ConfigError("step size " + csv::format_real(h) + " does not divide t_end = " +
                              csv::format_real(problem.t_end));
        }
        SplitStepper<Real> stepper(problem.A, problem.explicit_part, problem.explicit_jacobian);
        stepper.set_step(h);
        Vector z = problem.z0;
        for (long long k = 0; k < steps; ++k) {
            stepper.step(method, static_cast<Real>(k) * h, z);
        }
        const Real err = (z - exact).cwiseAbs().maxCoeff();
        r.h.push_back(h);
        r.error.push_back(err);
        const bool excluded = !(err >= floor);
        r.excluded.push_back(excluded);
        if (excluded) {
            r.warnings.push_back("h=" + csv::format_real(h) + " excluded: error " + csv::format_real(err) +
                                 " is below the noise floor");
        }
    }
    std::vector<Real> hs, es;
    for (std::size_t i = 0; i < r.h.size(); ++i) {
        Real slope = std::numeric_limits<Real>::quiet_NaN();
        if (i > 0 && !r.excluded[i] && !r.excluded[i - 1]) {
            slope = std::log(r.error[i] / r.error[i - 1]) / std::log(r.h[i] / r.h[i - 1]);
        }
        r.local_slope.push_back(slope);
        if (!r.excluded[i]) {
            hs.push_back(r.h[i]);
            es.push_back(r.error[i]);
        }
    }
    if (hs.size() < 2) {
        throw Error("convergence study: fewer than two step sizes above the noise floor");
    }
    r.order = log_log_slope(hs, es);
    return r;
}

std::string ConvergenceResult::to_csv(const std::vector<std::string>& comments) const {
    std::ostringstream out;
    write_comments(out, comments);
    out << "# fitted_order=" << csv::format_real(order) << "\n";
    out << "h[s],error,local_slope\n";
    for (std::size_t i = 0; i < h.size(); ++i) {
        out << csv::format_real(h[i]) << ',' << csv::format_real(error[i]) << ','
            << (std::isnan(local_slope[i]) ? std::string("nan") : csv::format_real(local_slope[i])) << "\n";
    }
    return out.str();
}

// -----------------------------------------------------------------------------
// Waveform metrics
// -----------------------------------------------------------------------------

Real relative_error(Real a, Real b) {
    if (b == 0.0) {
        return a == 0.0 ? 0.0 : std::numeric_limits<Real>::infinity();
    }
    return std::abs(a - b) / std::abs(b);
}

namespace {

void check_window(const WaveformSet& w, Real t0, Real t1) {
    if (!(t0 < t1)) {
        throw ConfigError("metrics window needs t0 < t1");
    }
    if (w.num_samples() < 2) {
        throw ConfigError("waveform has fewer than two samples");
    }
    const Real slack = 1e-9 * std::max<Real>(std::abs(t1), 1e-12);
    if (t0 < w.time().front() - slack || t1 > w.time().back() + slack) {
        throw ConfigError("metrics window [" + csv::format_real(t0) + ", " + csv::format_real(t1) +
                          "] lies outside the recorded data [" + csv::format_real(w.time().front()) +
                          ", " + csv::format_real(w.time().back()) + "]");
    }
}

Real interpolate(const std::vector<Real>& t, const std::vector<Real>& v, Real x) {
    if (x <= t.front()) return v.front();
    if (x >= t.back()) return v.back();
    auto it = std::upper_bound(t.begin(), t.end(), x);
    const auto hi = static_cast<std::size_t>(it - t.begin());
    const auto lo = hi - 1;
    const Real w = (x - t[lo]) / (t[hi] - t[lo]);
    return (1.0 - w) * v[lo] + w * v[hi];
}

/// Sample times inside [t0, t1], with the window edges added when they fall
/// between samples.
std::vector<Real> window_grid(const std::vector<Real>& t, Real t0, Real t1) {
    std::vector<Real> grid;
    auto lo = std::lower_bound(t.begin(), t.end(), t0);
    auto hi = std::upper_bound(t.begin(), t.end(), t1);
    if (lo == t.end() || *lo != t0) grid.push_back(std::max(t0, t.front()));
    grid.insert(grid.end(), lo, hi);
    if (grid.back() < std::min(t1, t.back())) grid.push_back(std::min(t1, t.back()));
    return grid;
}

ProbeMetrics series_metrics(const std::string& name, const std::vector<Real>& t, const std::vector<Real>& v) {
    ProbeMetrics m;
    m.probe = name;
    Real integral = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        m.peak = std::max(m.peak, std::abs(v[k]));
        if (k > 0) {
            integral += 0.5 * (t[k] - t[k - 1]) * (v[k] * v[k] + v[k - 1] * v[k - 1]);
        }
    }
    const Real span = t.back() - t.front();
    m.rms = span > 0.0 ? std::sqrt(integral / span) : std::abs(v.front());
    return m;
}

}  // namespace

MetricsReport waveform_metrics(const WaveformSet& w, Real t0, Real t1) {
    check_window(w, t0, t1);
    MetricsReport report;
    report.t0 = t0;
    report.t1 = t1;
    report.valid = !w.diverged();
    const auto grid = window_grid(w.time(), t0, t1);
    std::vector<Real> values(grid.size());
    for (std::size_t p = 0; p < w.num_probes(); ++p) {
        for (std::size_t k = 0; k < grid.size(); ++k) {
            values[k] = interpolate(w.time(), w.column(p), grid[k]);
        }
        report.probes.push_back(series_metrics(w.names()[p], grid, values));
    }
    return report;
}

ComparisonReport compare(const WaveformSet& a, const WaveformSet& b, Real t0, Real t1) {
    const std::set<std::string> names_a(a.names().begin(), a.names().end());
    const std::set<std::string> names_b(b.names().begin(), b.names().end());
    if (names_a != names_b) {
        std::vector<std::string> diff;
        std::set_symmetric_difference(names_a.begin(), names_a.end(), names_b.begin(), names_b.end(),
                                      std::back_inserter(diff));
        std::string list;
        for (const auto& d : diff) list += (list.empty() ? "" : ", ") + d;
        throw ConfigError("probe sets differ: " + list);
    }
    check_window(a, t0, t1);
    check_window(b, t0, t1);

    ComparisonReport report;
    report.t0 = t0;
    report.t1 = t1;
    report.valid = !a.diverged() && !b.diverged();
    const auto grid = window_grid(b.time(), t0, t1);
    std::vector<Real> va(grid.size()), vb(grid.size());
    for (std::size_t p = 0; p < b.num_probes(); ++p) {
        const auto& name = b.names()[p];
        const auto& col_a = a.column(name);
        const auto& col_b = b.column(p);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            va[k] = interpolate(a.time(), col_a, grid[k]);
            vb[k] = interpolate(b.time(), col_b, grid[k]);
        }
        const auto ma = series_metrics(name, grid, va);
        const auto mb = series_metrics(name, grid, vb);
        report.rows.push_back({name, ma.rms, mb.rms, ma.peak, mb.peak, relative_error(ma.rms, mb.rms),
                               relative_error(ma.peak, mb.peak)});
    }
    return report;
}

Real ComparisonReport::max_rel_error() const {
    Real m = 0.0;
    for (const auto& r : rows) {
        m = std::max({m, r.rel_err_rms, r.rel_err_peak});
    }
    return m;
}

std::string ComparisonReport::to_csv(const std::vector<std::string>& comments) const {
    std::ostringstream out;
    write_comments(out, comments);
    out << "# window=" << csv::format_real(t0) << ":" << csv::format_real(t1) << "\n";
    if (!valid) {
        out << "# invalid: at least one waveform diverged\n";
    }
    out << "probe,rms_a,rms_b,peak_a,peak_b,rel_err_rms,rel_err_peak\n";
    for (const auto& r : rows) {
        out << csv::join({r.probe, csv::format_real(r.rms_a), csv::format_real(r.rms_b),
                          csv::format_real(r.peak_a), csv::format_real(r.peak_b),
                          csv::format_real(r.rel_err_rms), csv::format_real(r.rel_err_peak)})
            << "\n";
    }
    return out.str();
}

std::string ComparisonReport::to_table(const std::string& label_a, const std::string& label_b) const {
    std::ostringstream out;
    const int wa = static_cast<int>(std::max<std::size_t>(14, label_a.size() + 2));
    const int wb = static_cast<int>(std::max<std::size_t>(14, label_b.size() + 2));
    out << std::left << std::setw(12) << "Variable" << std::setw(8) << "Value" << std::right
        << std::setw(wa) << label_a << std::setw(wb) << label_b << std::setw(16) << "Relative Error"
        << "\n";
    auto line = [&](const std::string& probe, const char* kind, Real va, Real vb, Real err) {
        out << std::left << std::setw(12) << probe << std::setw(8) << kind << std::right
            << std::setw(wa) << std::setprecision(6) << va << std::setw(wb) << vb << std::setw(15)
            << std::fixed << std::setprecision(3) << err * 100.0 << "%" << std::defaultfloat << "\n";
    };
    for (const auto& r : rows) {
        line(r.probe, "RMS", r.rms_a, r.rms_b, r.rel_err_rms);
        line("", "Peak", r.peak_a, r.peak_b, r.rel_err_peak);
    }
    return out.str();
}

}  // namespace imexsim
