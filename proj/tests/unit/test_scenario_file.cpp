#include <catch_amalgamated.hpp>

#include "imexsim/errors.hpp"
#include "imexsim/scenario_file.hpp"

#include <cmath>

using namespace imexsim;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("quantities with SI prefixes", "[scenario_file]") {
    CHECK(parse_quantity("75n") == 75e-9);
    CHECK(parse_quantity("75ns") == 75e-9);
    CHECK(parse_quantity("42.95uH") == 42.95e-6);
    CHECK(parse_quantity("42.95µH") == 42.95e-6);
    CHECK(parse_quantity("1.5 kV") == 1.5e3);
    CHECK(parse_quantity("10m") == 10e-3);
    CHECK(parse_quantity("1meg") == 1e6);
    CHECK(parse_quantity("40kHz") == 40e3);
    CHECK(parse_quantity("4.7kohm") == 4.7e3);
    CHECK(parse_quantity("1e-6") == 1e-6);
    CHECK(parse_quantity(" -3.5 ") == -3.5);
    CHECK(parse_quantity("2V") == 2.0);
    CHECK_THROWS_AS(parse_quantity(""), ConfigError);
    CHECK_THROWS_AS(parse_quantity("abc"), ConfigError);
    CHECK_THROWS_AS(parse_quantity("12 furlongs"), ConfigError);
}

TEST_CASE("netlist scenario", "[scenario_file]") {
    const auto s = parse_scenario(R"(
name: rc
system:
  kind: netlist
  elements:
    - {id: V1, kind: v, pos: in, neg: gnd, value: 2V}
    - {id: R1, kind: r, pos: in, neg: c, value: 1k}
    - {id: C1, kind: c, pos: c, neg: 0, value: 1u}
  initial_conditions: {v(C1): 0.5}
probes:
  - {name: v, signal: V(C1), unit: V}
solver: {method: trapezoidal, h: 1us, t_end: 1ms, decimation: 5}
divergence: {factor: 10, oracle_peaks: {v: 2}}
)");
    CHECK(s.name == "rc");
    CHECK(s.solver.method == Method::Trapezoidal);
    CHECK(s.solver.h == 1e-6);
    CHECK(s.solver.decimation == 5);
    CHECK(s.t_end == 1e-3);
    CHECK(s.model.netlist->elements().size() == 3);
    CHECK(s.model.netlist->element("V1").neg == "0");
    CHECK(s.model.initial_conditions.at("v(C1)") == 0.5);
    CHECK(s.model.divergence_limits.at("v") == 20.0);
    const auto w = run(s.model, s.solver, s.t_end);
    CHECK(w.column("v").back() == Catch::Approx(2.0 - 1.5 * std::exp(-1.0)).epsilon(1e-6));
}

TEST_CASE("configuration errors carry a location", "[scenario_file]") {
    try {
        (void)parse_scenario("name: x\nsystem:\n  kind: netlist\n  elements: []\n  colour: blue\n");
        FAIL("accepted an unknown key");
    } catch (const ConfigError& e) {
        CHECK_THAT(e.what(), ContainsSubstring("colour"));
        CHECK_THAT(e.what(), ContainsSubstring("line"));
    }
    CHECK_THROWS_AS(parse_scenario("system: {kind: spaceship}"), ConfigError);
    CHECK_THROWS_AS(parse_scenario("[1, 2"), ConfigError);
    CHECK_THROWS_AS(parse_scenario(R"(
system:
  kind: netlist
  elements:
    - {id: X1, kind: memristor, pos: a, neg: 0, value: 1}
)"),
                    ConfigError);
    CHECK_THROWS_AS(parse_scenario("system: {kind: wpt}\nsolver: {backend: fixed, method: latency}"), ConfigError);
}

TEST_CASE("shipped scenarios load", "[scenario_file]") {
    const auto st = load_scenario("wpt_startup");
    CHECK(st.solver.h == 75e-9);
    CHECK(st.t_end == 0.05);
    REQUIRE(st.window);
    CHECK(st.window->first == 0.048);
    CHECK(st.model.motion.is_stationary());

    const auto tr = load_scenario("wpt_transit");
    CHECK_FALSE(tr.model.motion.is_stationary());
    CHECK(tr.model.divergence_limits.size() == tr.model.probes.size());

    for (const auto* name : {"rc_charging", "example_commented"}) {
        INFO(name);
        CHECK_NOTHROW(load_scenario(name));
    }
    CHECK_THROWS_AS(load_scenario("no_such_scenario"), ConfigError);
}

TEST_CASE("scenario hash", "[scenario_file]") {
    const auto a = load_scenario("wpt_startup");
    const auto b = load_scenario("wpt_startup");
    const auto c = load_scenario("wpt_transit");
    CHECK(scenario_hash(a).size() == 16);
    CHECK(scenario_hash(a) == scenario_hash(b));
    CHECK(scenario_hash(a) != scenario_hash(c));
}
