#pragma once

#include "imexsim/solvers.hpp"
#include "imexsim/waveform.hpp"

#include <functional>
#include <string>
#include <vector>

namespace imexsim {

// -----------------------------------------------------------------------------
// Scalar test equation  dx/dt = lambda0 x (explicit) + lambda1 x (implicit)
// -----------------------------------------------------------------------------

/// One-step growth factor of the imex scheme with z0 = h lambda0, z1 = h lambda1:
/// R = ((z0 + 1)^2 + 1 + z1 (z0 + 1)) / (2 - z1). Throws PoleError at z1 = 2.
[[nodiscard]] Complex amplification(Complex z0, Complex z1);

/// Same ratio obtained by actually stepping the scalar split system once.
[[nodiscard]] Complex stepped_amplification(Method method, Complex z0, Complex z1);

struct StabilityGridSpec {
    Real re_min = -10.0;
    Real re_max = 10.0;
    Real im_min = -10.0;
    Real im_max = 10.0;
    std::size_t re_points = 101;
    std::size_t im_points = 101;

    void validate() const;
};

struct StabilityGrid {
    Complex z0;
    StabilityGridSpec spec;
    std::vector<Real> re;       ///< z1 real axis samples
    std::vector<Real> im;       ///< z1 imaginary axis samples
    std::vector<Real> abs_r;    ///< |R|, index = i_im * re.size() + i_re; NaN at poles
    std::vector<bool> pole;

    [[nodiscard]] Real at(std::size_t i_re, std::size_t i_im) const {
        return abs_r[i_im * re.size() + i_re];
    }
    [[nodiscard]] bool is_pole(std::size_t i_re, std::size_t i_im) const {
        return pole[i_im * re.size() + i_re];
    }
    /// Columns z1_re, z1_im, absR (empty absR at poles).
    [[nodiscard]] std::string to_csv(const std::vector<std::string>& comments = {}) const;
};

[[nodiscard]] StabilityGrid stability_region(Complex z0, const StabilityGridSpec& spec = {});

// -----------------------------------------------------------------------------
// Frozen circuit systems
// -----------------------------------------------------------------------------

/// Closed-form one-step map G with [x; psi]_{n+1} = G [x; psi]_n, zero sources.
[[nodiscard]] Matrix one_step_matrix(Method method, const FrozenSystem& system, Real h);

/// The same map assembled column by column by stepping the circuit kernel
/// from every canonical basis vector.
[[nodiscard]] Matrix stepped_one_step_matrix(Method method, const FrozenSystem& system, Real h);

/// Largest eigenvalue modulus; dense eigensolver with a power-iteration fallback.
[[nodiscard]] Real spectral_radius(const Matrix& G);

/// Power-iteration estimate alone (exposed for testing the fallback path).
/// Throws Error when it fails to settle within `max_iter`.
[[nodiscard]] Real spectral_radius_power(const Matrix& G, Real tol = 1e-10, int max_iter = 200000);

// -----------------------------------------------------------------------------
// Order of accuracy
// -----------------------------------------------------------------------------

struct ConvergenceProblem {
    std::string name;
    Matrix A;  ///< implicit linear part
    SplitStepper<Real>::ExplicitFn explicit_part;
    SplitStepper<Real>::JacobianFn explicit_jacobian;
    Vector z0;
    Real t_end = 1.0;
    std::function<Vector(Real)> exact;
};

/// dx/dt = -x^3 - 5x, x(0) = 1: cubic term explicit, linear term implicit.
/// Exact solution x(t) = 1 / sqrt(1.2 e^{10 t} - 0.2).
[[nodiscard]] ConvergenceProblem cubic_problem();
/// dx/dt = -x, x(0) = 1, all implicit.
[[nodiscard]] ConvergenceProblem linear_decay_problem();
/// "cubic" or "linear".
[[nodiscard]] ConvergenceProblem convergence_problem(std::string_view name);

struct ConvergenceResult {
    std::string problem;
    Method method = Method::Imex;
    std::vector<Real> h;
    std::vector<Real> error;
    std::vector<Real> local_slope;  ///< slope to the previous h; NaN for the first
    std::vector<bool> excluded;     ///< below the noise floor
    Real order = 0.0;               ///< least-squares slope over the kept points
    std::vector<std::string> warnings;

    /// Columns h, error, local_slope.
    [[nodiscard]] std::string to_csv(const std::vector<std::string>& comments = {}) const;
};

[[nodiscard]] ConvergenceResult convergence_order(const ConvergenceProblem& problem, Method method,
                                                  const std::vector<Real>& h_list);

/// Least-squares slope of log(y) against log(x).
[[nodiscard]] Real log_log_slope(const std::vector<Real>& x, const std::vector<Real>& y);

// -----------------------------------------------------------------------------
// Waveform metrics
// -----------------------------------------------------------------------------

struct ProbeMetrics {
    std::string probe;
    Real rms = 0.0;
    Real peak = 0.0;
};

struct MetricsReport {
    Real t0 = 0.0;
    Real t1 = 0.0;
    bool valid = true;  ///< false when the waveform diverged
    std::vector<ProbeMetrics> probes;
};

/// RMS (time-weighted, trapezoidal) and peak |value| of every probe in [t0, t1].
[[nodiscard]] MetricsReport waveform_metrics(const WaveformSet& w, Real t0, Real t1);

struct ComparisonRow {
    std::string probe;
    Real rms_a = 0.0;
    Real rms_b = 0.0;
    Real peak_a = 0.0;
    Real peak_b = 0.0;
    Real rel_err_rms = 0.0;
    Real rel_err_peak = 0.0;
};

struct ComparisonReport {
    Real t0 = 0.0;
    Real t1 = 0.0;
    bool valid = true;
    std::vector<ComparisonRow> rows;

    [[nodiscard]] Real max_rel_error() const;
    /// probe, rms_a, rms_b, peak_a, peak_b, rel_err_rms, rel_err_peak.
    [[nodiscard]] std::string to_csv(const std::vector<std::string>& comments = {}) const;
    /// Fixed-width text table: per probe an RMS row and a peak row.
    [[nodiscard]] std::string to_table(const std::string& label_a = "a",
                                       const std::string& label_b = "b") const;
};

/// Compares `a` against the reference `b` on b's sample grid (a is linearly
/// resampled). Relative error = |a - b| / |b|. Both waveforms must carry the
/// same probe set; otherwise ConfigError lists the symmetric difference.
[[nodiscard]] ComparisonReport compare(const WaveformSet& a, const WaveformSet& b, Real t0, Real t1);

/// |a - b| / |b|; 0 when both are 0, +inf when only b is 0.
[[nodiscard]] Real relative_error(Real a, Real b);

}  // namespace imexsim
