// Per-step cost of the kernels on the wpt_startup network.
//
//   imexsim_bench --benchmark_filter=Step

#include "imexsim/scenarios.hpp"

#include <benchmark/benchmark.h>

using namespace imexsim;

namespace {

SolverConfig config_for(int which) {
    auto cfg = build_motion_scenario(MotionScenario::StartupStatic).solver;
    switch (which) {
        case 0: cfg.method = Method::Imex; break;
        case 1: cfg.method = Method::Latency; break;
        case 2: cfg.method = Method::Trapezoidal; break;
        default: cfg.method = Method::Imex; cfg.backend = Backend::fixed_point(); break;
    }
    return cfg;
}

const char* label(int which) {
    static const char* names[] = {"imex", "latency", "trapezoidal", "imex/fixed(64,24)"};
    return names[which];
}

// Whole pipeline step: controllers, switching resolution, coupling, kernel, probes.
void BM_PipelineStep(benchmark::State& state) {
    const int which = static_cast<int>(state.range(0));
    const auto sc = build_motion_scenario(MotionScenario::StartupStatic);
    Simulation sim(sc.model, config_for(which));
    for (int k = 0; k < 100000; ++k) {  // past the soft start, switching states cached
        sim.prepare();
        sim.step();
    }
    for (auto _ : state) {
        sim.prepare();
        sim.step();
        benchmark::DoNotOptimize(sim.probes().data());
    }
    state.SetLabel(label(which));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PipelineStep)->DenseRange(0, 3);

// Solver kernel alone on a frozen switching state.
void BM_KernelStep(benchmark::State& state) {
    const int which = static_cast<int>(state.range(0));
    const auto sc = build_motion_scenario(MotionScenario::StartupStatic);
    Simulation sim(sc.model, sc.solver);
    for (int k = 0; k < 100000; ++k) {
        sim.prepare();
        sim.step();
    }
    sim.prepare();
    const auto& st = sim.state();
    const auto entry = sim.bank().get(st.signals);
    const Matrix Minv(inverse_inductance(st.inductances));
    const auto& bank = sim.bank();
    const auto ids = bank.netlist().input_elements();
    const InputFn inputs = [&](Real, Vector& u) {
        for (std::size_t i = 0; i < ids.size(); ++i) u(static_cast<Index>(i)) = bank.netlist().elements()[ids[i]].value;
    };
    const auto cfg = config_for(which);
    Vector x = st.x, psi = st.psi;
    std::uint64_t version = 1;
    if (cfg.backend.is_fixed()) {
        FixedImexStepper stepper(bank.num_states(), bank.num_inputs(), bank.num_ports(), cfg.h, cfg.backend.format);
        stepper.set_state(x, psi);
        for (auto _ : state) {
            stepper.step(*entry, Minv, version, st.t, inputs);
            benchmark::ClobberMemory();
        }
    } else {
        CircuitStepper stepper(bank.num_states(), bank.num_inputs(), bank.num_ports(), cfg);
        for (auto _ : state) {
            stepper.step(*entry, Minv, version, st.t, inputs, x, psi);
            benchmark::ClobberMemory();
        }
    }
    state.SetLabel(label(which));
    state.counters["states"] = static_cast<double>(bank.num_states());
}
BENCHMARK(BM_KernelStep)->DenseRange(0, 3);

// MNA elimination for one switching state (a cache miss).
void BM_StateSpaceBuild(benchmark::State& state) {
    const auto sys = build_wpt_system({});
    std::vector<bool> gates(sys.netlist->switch_elements().size(), false);
    std::vector<bool> diodes(sys.netlist->diode_elements().size(), false);
    for (auto _ : state) {
        StateSpaceBank bank(sys.netlist, {});
        benchmark::DoNotOptimize(bank.get({gates, diodes}));
    }
}
BENCHMARK(BM_StateSpaceBuild)->Unit(benchmark::kMicrosecond);

void BM_InverseInductance(benchmark::State& state) {
    Inductances L = SynthTableParams{}.nominal;
    for (auto _ : state) {
        benchmark::DoNotOptimize(inverse_inductance(L));
        L.M1 *= 1.0000001;
    }
}
BENCHMARK(BM_InverseInductance);

}  // namespace
BENCHMARK_MAIN();
