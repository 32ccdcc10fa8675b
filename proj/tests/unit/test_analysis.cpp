#include <catch_amalgamated.hpp>

#include "imexsim/analysis.hpp"
#include "imexsim/errors.hpp"
#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace imexsim;
using Catch::Approx;

namespace {

constexpr Real stable_tol = 1e-12;

FrozenSystem scalar_system(Real lambda) {
    FrozenSystem s;
    s.A = Matrix::Constant(1, 1, lambda);
    s.B1 = Matrix::Zero(1, 0);
    s.B2 = Matrix::Zero(1, 0);
    s.Cp = Matrix::Zero(0, 1);
    s.D1p = Matrix::Zero(0, 0);
    s.D2p = Matrix::Zero(0, 0);
    s.Minv = Matrix::Zero(0, 0);
    return s;
}

WaveformSet sampled(const std::vector<std::string>& names, std::function<std::vector<Real>(Real)> f, Real t1,
                    std::size_t n) {
    WaveformSet w(names, std::vector<std::string>(names.size(), ""));
    for (std::size_t k = 0; k <= n; ++k) {
        const Real t = t1 * static_cast<Real>(k) / static_cast<Real>(n);
        w.append(t, f(t));
    }
    return w;
}

}  // namespace

TEST_CASE("amplification factor values", "[analysis][stability]") {
    CHECK(amplification(0.0, 0.0) == Complex(1.0));
    CHECK(amplification(-1.0, 0.0) == Complex(0.5));
    CHECK(std::abs(amplification(-0.5, -1.0) - 0.25) < 1e-15);
    CHECK_THROWS_AS(amplification(-0.5, 2.0), PoleError);
    for (auto z : {Complex(-0.3, 0.2), Complex(0.1, -1.0)}) {
        for (auto z1 : {Complex(-4.0, 3.0), Complex(0.5, 0.5)}) {
            CHECK(std::abs(amplification(z, z1) - oracle::imex_ratio(z, z1)) <= 1e-14 * std::abs(oracle::imex_ratio(z, z1)));
            CHECK(std::abs(stepped_amplification(Method::Imex, z, z1) - oracle::imex_ratio(z, z1)) <=
                  1e-13 * std::abs(oracle::imex_ratio(z, z1)));
        }
    }
}

TEST_CASE("z0 = 0: stable exactly on the closed left half-plane", "[analysis][stability]") {
    StabilityGridSpec spec{-5, 5, -5, 5, 101, 101};
    const auto g = stability_region(0.0, spec);
    for (std::size_t i = 0; i < g.re.size(); ++i) {
        for (std::size_t j = 0; j < g.im.size(); ++j) {
            if (g.is_pole(i, j)) continue;
            const bool stable = g.at(i, j) <= 1.0 + stable_tol;
            INFO("z1 = " << g.re[i] << " + " << g.im[j] << "i");
            CHECK(stable == (g.re[i] <= 1e-12));
        }
    }
}

TEST_CASE("z0 = -1: stable outside the unit disk around 2", "[analysis][stability]") {
    StabilityGridSpec spec{-5, 5, -5, 5, 101, 101};
    const auto g = stability_region(-1.0, spec);
    std::size_t poles = 0;
    for (std::size_t i = 0; i < g.re.size(); ++i) {
        for (std::size_t j = 0; j < g.im.size(); ++j) {
            if (g.is_pole(i, j)) {
                ++poles;
                continue;
            }
            const Real dist = std::abs(Complex(g.re[i], g.im[j]) - 2.0);
            if (std::abs(dist - 1.0) < 1e-9) continue;  // boundary samples: |R| = 1 up to rounding
            CHECK((g.at(i, j) <= 1.0 + stable_tol) == (dist >= 1.0));
        }
    }
    CHECK(poles == 1);  // z1 = 2
}

TEST_CASE("stability grid is conjugate symmetric for real z0", "[analysis][stability]") {
    StabilityGridSpec spec{-3, 3, -3, 3, 31, 31};
    const auto g = stability_region(-0.7, spec);
    const std::size_t n = g.im.size();
    for (std::size_t i = 0; i < g.re.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (g.is_pole(i, j)) continue;
            CHECK(g.at(i, j) == Approx(g.at(i, n - 1 - j)).epsilon(1e-14));
        }
    }
}

TEST_CASE("one-step matrices of trivial systems", "[analysis][spectral]") {
    const Real h = 1e-3, lambda = -250.0;
    CHECK(one_step_matrix(Method::ForwardEuler, scalar_system(lambda), h)(0, 0) == Approx(1 + h * lambda));
    CHECK(one_step_matrix(Method::Latency, scalar_system(lambda), h)(0, 0) == Approx(1 / (1 - h * lambda)));

    std::mt19937_64 rng(17);
    FrozenSystem s = scalar_system(0.0);
    s.A = oracle::random_stable(rng, 7, 1e3, 1.0);
    s.B1 = Matrix::Zero(7, 0);
    s.B2 = Matrix::Zero(7, 0);
    s.Cp = Matrix::Zero(0, 7);
    CHECK(oracle::rel_diff(one_step_matrix(Method::Imex, s, h), oracle::cayley(s.A, h)) < 1e-12);
    CHECK(oracle::rel_diff(stepped_one_step_matrix(Method::Imex, s, h), oracle::cayley(s.A, h)) < 1e-12);
}

TEST_CASE("spectral radius", "[analysis][spectral]") {
    CHECK(spectral_radius(Matrix::Identity(3, 3)) == Approx(1.0));
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 0.5;
    d(1, 1) = -0.25;
    CHECK(spectral_radius(d) == Approx(0.5));

    std::mt19937_64 rng(8);
    std::normal_distribution<Real> g;
    for (int trial = 0; trial < 20; ++trial) {
        Matrix M(6, 6);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) M(i, j) = g(rng);
        Real ref = 0.0;
        for (auto l : oracle::eigenvalues_via_charpoly(M)) ref = std::max(ref, std::abs(l));
        CHECK(std::abs(spectral_radius(M) - ref) <= 1e-8 * ref);
    }
}

TEST_CASE("power-iteration fallback", "[analysis][spectral]") {
    Matrix M(3, 3);
    M << 0.9, 0.1, 0.0,
         0.0, 0.5, 0.2,
         0.1, 0.0, 0.3;
    CHECK(spectral_radius_power(M) == Approx(spectral_radius(M)).epsilon(1e-8));
    // complex dominant pair: rotation scaled by 0.8
    Matrix R(2, 2);
    const Real c = 0.8 * std::cos(0.3), s = 0.8 * std::sin(0.3);
    R << c, -s, s, c;
    CHECK(spectral_radius_power(R) == Approx(0.8).epsilon(1e-8));
}

TEST_CASE("convergence orders on smooth problems", "[analysis][order]") {
    std::vector<Real> hs;
    for (int k = 4; k <= 10; ++k) hs.push_back(std::ldexp(1.0, -k));
    const auto lin = linear_decay_problem();
    CHECK(convergence_order(lin, Method::Trapezoidal, hs).order == Approx(2.0).margin(0.1));
    CHECK(convergence_order(lin, Method::ForwardEuler, hs).order == Approx(1.0).margin(0.1));
    const auto cubic = cubic_problem();
    const auto r = convergence_order(cubic, Method::Imex, hs);
    CHECK(r.order >= 1.9);
    CHECK(r.order <= 2.1);
    // exact solution check of the cubic benchmark itself
    CHECK(cubic.exact(0.0)(0) == Approx(1.0));
    const Real t = 0.3, x = cubic.exact(t)(0);
    const Real dt = 1e-6;
    const Real deriv = (cubic.exact(t + dt)(0) - cubic.exact(t - dt)(0)) / (2 * dt);
    CHECK(deriv == Approx(-x * x * x - 5 * x).epsilon(1e-7));
}

TEST_CASE("log-log slope", "[analysis][order]") {
    CHECK(log_log_slope({1, 2, 4}, {1, 4, 16}) == Approx(2.0));
    CHECK(log_log_slope({1, 10}, {3, 0.3}) == Approx(-1.0));
}

TEST_CASE("waveform metrics", "[analysis][metrics]") {
    const Real f = 50.0;
    const auto w = sampled({"s"}, [&](Real t) { return std::vector<Real>{std::sin(2 * std::numbers::pi * f * t)}; },
                           2.0 / f, 4000);
    const auto m = waveform_metrics(w, 0.0, 2.0 / f);
    CHECK(m.probes[0].rms == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));
    CHECK(m.probes[0].peak == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("comparisons", "[analysis][metrics]") {
    const auto one = sampled({"a", "b"}, [](Real t) { return std::vector<Real>{1.0, t}; }, 1.0, 100);
    const auto two = sampled({"a", "b"}, [](Real t) { return std::vector<Real>{2.0, t}; }, 1.0, 100);
    const auto self = compare(one, one, 0.0, 1.0);
    CHECK(self.max_rel_error() == 0.0);
    const auto r = compare(two, one, 0.0, 1.0);
    CHECK(r.rows[0].rel_err_rms == Approx(1.0));
    CHECK(r.rows[0].rel_err_peak == Approx(1.0));
    CHECK(r.rows[1].rel_err_rms == Approx(0.0).margin(1e-15));

    const auto other = sampled({"a", "c"}, [](Real) { return std::vector<Real>{1.0, 1.0}; }, 1.0, 10);
    CHECK_THROWS_AS(compare(one, other, 0.0, 1.0), ConfigError);

    CHECK(relative_error(0.0, 0.0) == 0.0);
    CHECK(std::isinf(relative_error(1.0, 0.0)));
    CHECK(relative_error(-2.0, 1.0) == 3.0);
}
