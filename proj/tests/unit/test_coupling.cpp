#include <catch_amalgamated.hpp>

#include "imexsim/coupling.hpp"
#include "imexsim/errors.hpp"
#include "imexsim/solvers.hpp"
#include "oracles.hpp"

#include <Eigen/Eigenvalues>

#include <random>

using namespace imexsim;
using Catch::Approx;

namespace {

Matrix as_dyn(const Matrix3& m) { return Matrix(m); }

bool spd_by_eigenvalues(const Inductances& L) {
    Eigen::SelfAdjointEigenSolver<Matrix3> es(L.matrix());
    return es.eigenvalues().minCoeff() > 0.0;
}

Inductances random_spd(std::mt19937_64& rng) {
    std::uniform_real_distribution<Real> U(0.0, 1.0);
    const Inductances nom = SynthTableParams{}.nominal;
    for (;;) {
        Inductances L;
        L.Lp = nom.Lp * (0.5 + U(rng));
        L.Ls1 = nom.Ls1 * (0.5 + U(rng));
        L.Ls2 = nom.Ls2 * (0.5 + U(rng));
        // mutuals up to just below the 2-coil limit, either sign
        L.M1 = (2 * U(rng) - 1) * 0.999 * std::sqrt(L.Lp * L.Ls1);
        L.M2 = (2 * U(rng) - 1) * 0.999 * std::sqrt(L.Lp * L.Ls2);
        if (spd_by_eigenvalues(L)) return L;
    }
}

}  // namespace

TEST_CASE("decoupled coils invert to the diagonal", "[coupling]") {
    const Inductances L{2.0, 4.0, 8.0, 0.0, 0.0};
    const Matrix3 inv = inverse_inductance(L);
    CHECK(inv(0, 0) == 0.5);
    CHECK(inv(1, 1) == 0.25);
    CHECK(inv(2, 2) == 0.125);
    CHECK(inv(0, 1) == 0.0);
    CHECK(inv(1, 2) == 0.0);
}

TEST_CASE("unit coils with 0.5 H mutuals match Gauss-Jordan", "[coupling]") {
    const Inductances L{1.0, 1.0, 1.0, 0.5, 0.5};
    const Matrix ref = oracle::gauss_jordan_inverse(as_dyn(L.matrix()));
    CHECK(oracle::rel_diff(as_dyn(inverse_inductance(L)), ref) < 1e-14);
}

TEST_CASE("closed-form inverse across the table and random SPD matrices", "[coupling]") {
    const auto table = synth_table({});
    for (const auto& row : table.rows()) {
        const Matrix ref = oracle::gauss_jordan_inverse(as_dyn(row.matrix()));
        CHECK(oracle::rel_diff(as_dyn(inverse_inductance(row)), ref) <= 1e-10);
    }
    std::mt19937_64 rng(2024);
    Real worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const auto L = random_spd(rng);
        const Matrix ref = oracle::gauss_jordan_inverse(as_dyn(L.matrix()));
        worst = std::max(worst, oracle::rel_diff(as_dyn(inverse_inductance(L)), ref));
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("vanishing denominator raises", "[coupling]") {
    const Real m = std::sqrt(0.5);
    CHECK_THROWS_AS(inverse_inductance({1.0, 1.0, 1.0, m, m}), SingularCouplingError);
}

TEST_CASE("flux to current", "[coupling]") {
    const Matrix3 inv = inverse_inductance(SynthTableParams{}.nominal);
    CHECK(currents_from_fluxes(inv, Vector3::Zero()).isZero());

    const Vector3 i = currents_from_fluxes(inverse_inductance({1, 1, 1, 0, 0}), {1, 2, 3});
    CHECK(i == Vector3(1, 2, 3));

    std::mt19937_64 rng(11);
    std::normal_distribution<Real> g(0.0, 1e-3);
    for (int k = 0; k < 200; ++k) {
        const auto L = random_spd(rng);
        const Vector3 psi(g(rng), g(rng), g(rng));
        const Vector3 back = L.matrix() * currents_from_fluxes(inverse_inductance(L), psi);
        CHECK((back - psi).cwiseAbs().maxCoeff() <= 1e-10 * psi.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("flux derivative is the port voltage", "[coupling]") {
    CHECK(nl_derivative(Vector3::Zero()).isZero());
    CHECK(nl_derivative({1, -1, 0.5}) == Vector3(1, -1, 0.5));
}

TEST_CASE("1 V on the primary port for 1 ms gives 1 mV s", "[coupling]") {
    // one dummy state, three ports; port 1 sees the input, the others 0 V
    StateSpaceEntry e;
    e.A = Matrix::Constant(1, 1, -1.0);
    e.B1 = Matrix::Zero(1, 1);
    e.B2 = Matrix::Zero(1, 3);
    e.C = Matrix::Zero(3, 1);
    e.D1 = Matrix::Zero(3, 1);
    e.D1(0, 0) = 1.0;
    e.D2 = Matrix::Zero(3, 3);
    const Matrix Minv = as_dyn(inverse_inductance(SynthTableParams{}.nominal));
    const InputFn one = [](Real, Vector& u) { u(0) = 1.0; };
    for (auto method : {Method::Imex, Method::Latency, Method::ForwardEuler, Method::Trapezoidal}) {
        SolverConfig cfg;
        cfg.method = method;
        cfg.h = 1e-6;
        CircuitStepper st(1, 1, 3, cfg);
        Vector x = Vector::Zero(1), psi = Vector::Zero(3);
        for (int k = 0; k < 1000; ++k) st.step(e, Minv, 1, k * cfg.h, one, x, psi);
        INFO(to_string(method));
        CHECK(psi(0) == Approx(1e-3).epsilon(1e-12));
        CHECK(psi(1) == 0.0);
    }
}

TEST_CASE("table interpolation", "[coupling][table]") {
    const auto t = synth_table({});
    const auto& x = t.positions();
    const auto& r = t.rows();
    CHECK(t.inductance_at(x[5]) == r[5]);
    const auto mid = t.inductance_at(0.5 * (x[9] + x[10]));
    CHECK(mid.M1 == Approx(0.5 * (r[9].M1 + r[10].M1)).epsilon(1e-14));
    CHECK(mid.Lp == Approx(0.5 * (r[9].Lp + r[10].Lp)).epsilon(1e-14));
    CHECK(t.inductance_at(x.back() + 3.0) == r.back());
    CHECK(t.inductance_at(-1.0) == r.front());
}

TEST_CASE("synthetic table shape", "[coupling][table]") {
    SynthTableParams p;
    p.samples = 11;  // puts a sample on the M1 transition centre (0.3 span)
    const auto t = synth_table(p);
    CHECK(t.inductance_at(0.0) == p.nominal);
    const Real floor = p.floor_fraction * p.nominal.M1;
    CHECK(t.inductance_at(0.3 * p.span).M1 == Approx(0.5 * (p.nominal.M1 + floor)).epsilon(1e-12));
    CHECK(raised_cosine_fall(0.6, 0.6, 0.5) == Approx(0.5));

    const auto full = synth_table({});
    for (int k = 0; k <= 1000; ++k) {
        const Real xq = full.first() + (full.last() - full.first()) * k / 1000.0;
        CHECK(spd_by_eigenvalues(full.inductance_at(xq)));
    }
    // the transit leaves M1 at the floor
    CHECK(full.rows().back().M1 < 0.05 * full.rows().front().M1);
}

TEST_CASE("table validation and csv round trip", "[coupling][table]") {
    const auto t = synth_table({});
    const auto path = std::filesystem::temp_directory_path() / "imexsim_table_rt.csv";
    t.save_csv(path);
    const auto back = InductanceTable::load_csv(path);
    REQUIRE(back.size() == t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(back.positions()[i] == t.positions()[i]);
        CHECK(back.rows()[i] == t.rows()[i]);
    }
    std::filesystem::remove(path);

    InductanceTable bad({0.0, 1.0}, {SynthTableParams{}.nominal, {1e-6, 1e-6, 1e-6, 1e-5, 0.0}});
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    InductanceTable unordered({1.0, 0.0}, {SynthTableParams{}.nominal, SynthTableParams{}.nominal});
    CHECK_THROWS_AS(unordered.validate(), ConfigError);
}

TEST_CASE("motion profiles", "[coupling][motion]") {
    const auto s = MotionProfile::stationary(0.4);
    CHECK(s.position(0.0) == 0.4);
    CHECK(s.position(10.0) == 0.4);
    const auto v = MotionProfile::constant_velocity(0.0, 10.0, 0.02);
    CHECK(v.position(0.01) == 0.0);
    CHECK(v.position(0.12) == Approx(1.0));
    const auto p = MotionProfile::piecewise({0.0, 1.0, 2.0}, {0.0, 1.0, 0.5});
    CHECK(p.position(0.5) == Approx(0.5));
    CHECK(p.position(1.5) == Approx(0.75));
    CHECK(p.position(5.0) == 0.5);
}
