#pragma once

// =============================================================================
// Nonlinear magnetic coupling
// =============================================================================
// Three coupled coils (primary p, receivers s1 and s2) with flux-linkage
// state psi = [Psi_p; Psi_s1; Psi_s2]. The receivers are not coupled to each
// other, so the inductance matrix is
//
//     M = [[Lp, M1, M2],
//          [M1, Ls1, 0],
//          [M2, 0, Ls2]]
//
// and the port currents are i = M^-1 psi. The flux derivative is the port
// voltage returned by the switched network.
// =============================================================================

#include "imexsim/linalg.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace imexsim {

using Matrix3 = Eigen::Matrix3d;
using Vector3 = Eigen::Vector3d;

struct Inductances {
    Real Lp = 0.0;
    Real Ls1 = 0.0;
    Real Ls2 = 0.0;
    Real M1 = 0.0;
    Real M2 = 0.0;

    [[nodiscard]] Matrix3 matrix() const;
    /// Leading principal minors all positive.
    [[nodiscard]] bool is_spd() const;

    [[nodiscard]] bool operator==(const Inductances&) const = default;
};

/// (1 - w) a + w b, component-wise.
[[nodiscard]] Inductances lerp(const Inductances& a, const Inductances& b, Real w);

/// Closed-form inverse of the structured inductance matrix. Throws
/// SingularCouplingError when the denominator vanishes.
[[nodiscard]] Matrix3 inverse_inductance(const Inductances& L);

[[nodiscard]] inline Vector3 currents_from_fluxes(const Matrix3& Minv, const Vector3& psi) {
    return Minv * psi;
}

/// d(psi)/dt equals the applied port voltages.
[[nodiscard]] inline Vector3 nl_derivative(const Vector3& port_voltages) { return port_voltages; }

/// Position-indexed inductance samples with piecewise-linear interpolation.
class InductanceTable {
public:
    InductanceTable() = default;
    InductanceTable(std::vector<Real> positions, std::vector<Inductances> rows,
                    std::vector<std::string> comments = {});

    [[nodiscard]] const std::vector<Real>& positions() const { return positions_; }
    [[nodiscard]] const std::vector<Inductances>& rows() const { return rows_; }
    [[nodiscard]] const std::vector<std::string>& comments() const { return comments_; }
    [[nodiscard]] std::size_t size() const { return rows_.size(); }
    [[nodiscard]] Real first() const { return positions_.front(); }
    [[nodiscard]] Real last() const { return positions_.back(); }

    /// Clamped outside [first, last].
    [[nodiscard]] Inductances inductance_at(Real x) const;

    /// Checks ordering and positive definiteness at every sample and at
    /// `sweep` evenly spaced interpolated positions. Throws ConfigError.
    void validate(std::size_t sweep = 1000) const;

    [[nodiscard]] static InductanceTable load_csv(const std::filesystem::path& path);
    [[nodiscard]] std::string to_csv() const;
    void save_csv(const std::filesystem::path& path) const;

private:
    std::vector<Real> positions_;
    std::vector<Inductances> rows_;
    std::vector<std::string> comments_;
};

/// Shape parameters of the synthetic coil-transit table.
struct SynthTableParams {
    Inductances nominal{35.75e-6, 254e-6, 254e-6, 40e-6, 40e-6};
    Real span = 2.0;               ///< m, table covers [0, span]
    Real transition_width = 0.5;   ///< m, width of each raised-cosine ramp
    Real floor_fraction = 0.02;    ///< residual coupling far from a transmitter
    Real lp_dip_fraction = 0.10;   ///< relative dip of Lp while no receiver is aligned
    std::size_t samples = 26;
};

/// Raised-cosine ramp from 1 (x <= center - width/2) to 0 (x >= center + width/2).
[[nodiscard]] Real raised_cosine_fall(Real x, Real center, Real width);
/// Raised-cosine bump: 1 at center, 0 for |x - center| >= width.
[[nodiscard]] Real raised_cosine_bump(Real x, Real center, Real width);

/// Qualitative stand-in for the measured curves: M1 falls to the floor around
/// 0.3 span, M2 dips and recovers around 0.6 span, Lp dips while M1 falls.
[[nodiscard]] InductanceTable synth_table(const SynthTableParams& params);

class MotionProfile {
public:
    enum class Kind { Stationary, ConstantVelocity, Piecewise };

    static MotionProfile stationary(Real position);
    /// x(t) = x0 + v (t - t_start) for t >= t_start, x0 before.
    static MotionProfile constant_velocity(Real x0, Real velocity, Real t_start = 0.0);
    /// Piecewise-linear through (time, position) breakpoints, held at both ends.
    static MotionProfile piecewise(std::vector<Real> times, std::vector<Real> positions);

    [[nodiscard]] Kind kind() const { return kind_; }
    [[nodiscard]] Real position(Real t) const;
    [[nodiscard]] bool is_stationary() const { return kind_ == Kind::Stationary; }

    [[nodiscard]] Real x0() const { return x0_; }
    [[nodiscard]] Real velocity() const { return velocity_; }
    [[nodiscard]] Real t_start() const { return t_start_; }
    [[nodiscard]] const std::vector<Real>& times() const { return times_; }
    [[nodiscard]] const std::vector<Real>& breakpoints() const { return positions_; }

private:
    Kind kind_ = Kind::Stationary;
    Real x0_ = 0.0;
    Real velocity_ = 0.0;
    Real t_start_ = 0.0;
    std::vector<Real> times_;
    std::vector<Real> positions_;
};

}  // namespace imexsim
