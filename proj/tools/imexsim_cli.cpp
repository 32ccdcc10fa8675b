// imexsim command-line front end.
//
//   imexsim simulate <scenario> [--method M] [--h H] [--backend B] [--t-end T] [--out DIR]
//   imexsim compare <a.csv> <b.csv> --window T0 T1 [--tolerance REL] [--out FILE]
//   imexsim stability --z0 RE+IMi [--grid N] [--range R] [--out FILE]
//   imexsim spectral --scenario stiff --method M --h-sweep START:STOP:STEP [--out FILE]
//   imexsim convergence --problem cubic --method M [--h-list ...] [--out FILE]
//   imexsim matrices <scenario> [--out DIR]
//   imexsim table [--out FILE]
//
// Exit codes: 0 ok, 1 other failure, 2 configuration error, 3 divergence,
// 4 tolerance exceeded. Relative --out paths resolve under IMEXSIM_OUT_ROOT.

#include "imexsim/analysis.hpp"
#include "imexsim/csv.hpp"
#include "imexsim/errors.hpp"
#include "imexsim/scenario_file.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace imexsim;

namespace {

enum Exit : int { ok = 0, failure = 1, config_error = 2, diverged = 3, tolerance = 4 };

fs::path out_root() {
    if (const char* env = std::getenv("IMEXSIM_OUT_ROOT"); env && *env) return env;
    return fs::current_path();
}

fs::path output_path(const std::string& out, const std::string& fallback) {
    fs::path p(out.empty() ? fallback : out);
    return p.is_absolute() ? p : out_root() / p;
}

std::string hash_text(const std::string& s) {
    ScenarioConfig tmp;
    tmp.source = s;
    return scenario_hash(tmp);
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// "-1+0.5i", "-1", "0.5i", "(-1,0.5)" or "-1,0.5".
Complex parse_complex(std::string s) {
    s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
    if (!s.empty() && s.front() == '(' && s.back() == ')') s = s.substr(1, s.size() - 2);
    if (auto c = s.find(','); c != std::string::npos) {
        return {csv::parse_real(s.substr(0, c)), csv::parse_real(s.substr(c + 1))};
    }
    if (s.empty()) throw ConfigError("empty complex number");
    if (s.back() != 'i' && s.back() != 'j') return {csv::parse_real(s), 0.0};
    s.pop_back();
    // split at the last sign that is not an exponent sign
    std::size_t split = std::string::npos;
    for (std::size_t k = s.size(); k-- > 1;) {
        if ((s[k] == '+' || s[k] == '-') && s[k - 1] != 'e' && s[k - 1] != 'E') {
            split = k;
            break;
        }
    }
    if (split == std::string::npos) {
        const auto im = s.empty() || s == "+" ? 1.0 : s == "-" ? -1.0 : csv::parse_real(s);
        return {0.0, im};
    }
    const auto re = csv::parse_real(s.substr(0, split));
    const auto ims = s.substr(split);
    const Real im = ims == "+" ? 1.0 : ims == "-" ? -1.0 : csv::parse_real(ims);
    return {re, im};
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

std::vector<Real> parse_sweep(const std::string& text) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw ConfigError("sweep must look like START:STOP:STEP");
    const Real a = parse_quantity(parts[0]), b = parse_quantity(parts[1]), d = parse_quantity(parts[2]);
    if (!(d > 0.0) || b < a) throw ConfigError("sweep needs STEP > 0 and STOP >= START");
    const auto n = static_cast<std::size_t>(std::llround((b - a) / d)) + 1;
    std::vector<Real> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(a + static_cast<Real>(i) * d);
    return out;
}

std::vector<Real> parse_list(const std::string& text) {
    std::vector<Real> out;
    for (const auto& p : split(text, ',')) out.push_back(parse_quantity(p));
    return out;
}

void write_manifest(const fs::path& dir, const nlohmann::json& j) {
    csv::write_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

// -----------------------------------------------------------------------------

struct SimulateArgs {
    std::string scenario;
    std::string method;
    std::string backend;
    std::string h;
    std::string t_end;
    std::string out;
    std::size_t decimation = 0;
    std::string record_from;
    bool quiet = false;
};

int cmd_simulate(const SimulateArgs& a, const std::string& command_line) {
    const auto t0 = std::chrono::steady_clock::now();
    auto sc = load_scenario(a.scenario);
    if (!a.method.empty()) sc.solver.method = method_from_string(a.method);
    if (!a.backend.empty()) sc.solver.backend = backend_from_string(a.backend);
    if (!a.h.empty()) sc.solver.h = parse_quantity(a.h);
    if (!a.t_end.empty()) sc.t_end = parse_quantity(a.t_end);
    if (a.decimation > 0) sc.solver.decimation = a.decimation;
    sc.solver.validate();
    if (sc.t_end < 0.0) throw ConfigError("--t-end must be >= 0");

    RunOptions opts;
    if (!a.record_from.empty()) opts.record_from = parse_quantity(a.record_from);
    int last_pct = -1;
    if (!a.quiet) {
        opts.progress = [&](Real f) {
            const int pct = static_cast<int>(f * 100.0);
            if (pct / 10 != last_pct / 10) {
                std::cerr << "  " << pct << "%\n";
                last_pct = pct;
            }
        };
    }

    std::ostringstream effective;
    effective.precision(17);
    effective << sc.source << "\n--method " << to_string(sc.solver.method) << " --backend " << sc.solver.backend.name()
              << " --h " << sc.solver.h << " --t-end " << sc.t_end << " --decimation " << sc.solver.decimation
              << " --record-from " << opts.record_from;
    const auto hash = hash_text(effective.str());

    auto w = run(sc.model, sc.solver, sc.t_end, opts);
    w.metadata["scenario_hash"] = hash;

    const auto dir = output_path(a.out, "runs/" + sc.name + "_" + std::string(to_string(sc.solver.method)));
    fs::create_directories(dir);
    w.write_csv(dir / "waveforms.csv");
    const auto marker = dir / "DIVERGED";
    if (w.diverged()) {
        std::ostringstream m;
        m << "t=" << csv::format_real(w.divergence->time) << "\nvariable=" << w.divergence->variable
          << "\nreason=" << w.divergence->reason << "\n";
        csv::write_atomic(marker, m.str());
    } else if (fs::exists(marker)) {
        fs::remove(marker);
    }

    const auto seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json j;
    j["command"] = command_line;
    j["scenario"] = a.scenario;
    j["scenario_name"] = sc.name;
    j["solver"] = {{"method", std::string(to_string(sc.solver.method))},
                   {"backend", sc.solver.backend.name()},
                   {"h", sc.solver.h},
                   {"t_end", sc.t_end},
                   {"decimation", sc.solver.decimation}};
    j["output_directory"] = dir.string();
    j["input_hash"] = hash;
    j["tool_version"] = IMEXSIM_VERSION;
    j["wall_clock_seconds"] = seconds;
    j["finished_at"] = iso_now();
    j["samples"] = w.num_samples();
    j["diverged"] = w.diverged();
    if (w.diverged()) {
        j["divergence"] = {{"time", w.divergence->time},
                           {"variable", w.divergence->variable},
                           {"reason", w.divergence->reason}};
    }
    for (const auto& [k, v] : w.metadata) {
        if (k.rfind("warning_", 0) == 0) j["warnings"].push_back(v);
    }
    if (auto it = w.metadata.find("saturation_count"); it != w.metadata.end()) j["saturation_count"] = it->second;
    write_manifest(dir, j);

    if (!a.quiet) {
        for (const auto& [k, v] : w.metadata) {
            if (k.rfind("warning_", 0) == 0) std::cerr << "warning: " << v << "\n";
        }
    }
    std::cout << sc.name << " " << to_string(sc.solver.method) << " " << sc.solver.backend.name() << ": "
              << w.num_samples() << " samples in " << csv::format_real(std::round(seconds * 100) / 100) << " s -> "
              << (dir / "waveforms.csv").string() << "\n";
    if (w.diverged()) {
        std::cout << "DIVERGED at t=" << csv::format_real(w.divergence->time) << " (" << w.divergence->variable
                  << ": " << w.divergence->reason << ")\n";
        return diverged;
    }
    return ok;
}

// -----------------------------------------------------------------------------

struct CompareArgs {
    std::string a;
    std::string b;
    std::vector<double> window;
    double tolerance = -1.0;
    std::vector<std::string> probes;
    std::string out;
};

fs::path waveform_file(const std::string& p) {
    fs::path path(p);
    if (!fs::exists(path) && path.is_relative()) path = out_root() / path;
    if (fs::is_directory(path)) path /= "waveforms.csv";
    if (!fs::exists(path)) throw ConfigError("no waveform file '" + path.string() + "'");
    return path;
}

WaveformSet select(const WaveformSet& w, const std::vector<std::string>& probes) {
    if (probes.empty()) return w;
    std::vector<std::string> units;
    std::vector<std::size_t> idx;
    for (const auto& p : probes) {
        auto i = w.find(p);
        if (!i) throw ConfigError("unknown probe '" + p + "'");
        idx.push_back(*i);
        units.push_back(w.units()[*i]);
    }
    WaveformSet out(probes, units);
    out.metadata = w.metadata;
    out.divergence = w.divergence;
    out.reserve(w.num_samples());
    std::vector<Real> row(idx.size());
    for (std::size_t s = 0; s < w.num_samples(); ++s) {
        for (std::size_t k = 0; k < idx.size(); ++k) row[k] = w.column(idx[k])[s];
        out.append(w.time()[s], row);
    }
    return out;
}

// "imex", or "imex/fixed(64,24)" for a non-default backend
std::string run_label(const WaveformSet& w, const char* fallback) {
    if (!w.metadata.count("method")) return fallback;
    std::string label = w.metadata.at("method");
    auto b = w.metadata.find("backend");
    if (b != w.metadata.end() && b->second != "float64") label += "/" + b->second;
    return label;
}

int cmd_compare(const CompareArgs& a) {
    const auto wa = select(WaveformSet::read_csv(waveform_file(a.a)), a.probes);
    const auto wb = select(WaveformSet::read_csv(waveform_file(a.b)), a.probes);
    Real t0 = 0.0, t1 = 0.0;
    if (a.window.size() == 2) {
        t0 = a.window[0];
        t1 = a.window[1];
    } else {
        t0 = wb.time().empty() ? 0.0 : wb.time().front();
        t1 = wb.time().empty() ? 0.0 : wb.time().back();
    }
    const auto report = compare(wa, wb, t0, t1);
    const auto label_a = run_label(wa, "a");
    const auto label_b = run_label(wb, "b");
    std::cout << report.to_table(label_a, label_b);

    std::vector<std::string> comments{"a=" + fs::path(a.a).string(), "b=" + fs::path(a.b).string()};
    for (const auto& key : {"method", "backend", "h", "scenario_hash"}) {
        if (wa.metadata.count(key)) comments.push_back(std::string("a_") + key + "=" + wa.metadata.at(key));
        if (wb.metadata.count(key)) comments.push_back(std::string("b_") + key + "=" + wb.metadata.at(key));
    }
    csv::write_atomic(output_path(a.out, "compare.csv"), report.to_csv(comments));

    if (!report.valid) {
        std::cout << "one of the runs diverged; metrics are not comparable\n";
        return diverged;
    }
    const auto worst = report.max_rel_error();
    std::cout << "max relative error " << csv::format_real(worst) << "\n";
    if (a.tolerance >= 0.0) {
        bool bad = false;
        for (const auto& r : report.rows) {
            if (r.rel_err_rms > a.tolerance || r.rel_err_peak > a.tolerance) {
                std::cout << "EXCEEDS tolerance: " << r.probe << " (rms " << csv::format_real(r.rel_err_rms)
                          << ", peak " << csv::format_real(r.rel_err_peak) << ")\n";
                bad = true;
            }
        }
        if (bad) return tolerance;
    }
    return ok;
}

// -----------------------------------------------------------------------------

int cmd_stability(const std::string& z0_text, std::size_t points, double range, const std::string& out) {
    const auto z0 = parse_complex(z0_text);
    StabilityGridSpec spec;
    spec.re_min = spec.im_min = -range;
    spec.re_max = spec.im_max = range;
    spec.re_points = spec.im_points = points;
    const auto grid = stability_region(z0, spec);
    std::size_t stable = 0, total = 0;
    for (std::size_t i = 0; i < grid.abs_r.size(); ++i) {
        if (grid.pole[i]) continue;
        ++total;
        stable += grid.abs_r[i] <= 1.0 ? 1 : 0;
    }
    const auto path = output_path(out, "stability.csv");
    std::ostringstream z;
    z << csv::format_real(z0.real()) << (z0.imag() < 0 ? "" : "+") << csv::format_real(z0.imag()) << "i";
    csv::write_atomic(path, grid.to_csv({"method=imex", "z0=" + z.str(), "scenario_hash=" + hash_text("stability " + z.str())}));
    std::cout << "z0=" << z.str() << ": " << stable << "/" << total << " grid points with |R| <= 1 -> "
              << path.string() << "\n";
    return ok;
}

FrozenSystem frozen_from_scenario(const std::string& name, std::string& source) {
    if (name == "stiff") {
        source = "builtin stiff";
        return build_stiff_test_circuit().system;
    }
    const auto sc = load_scenario(name);
    source = sc.source;
    StateSpaceBank bank(sc.model.netlist, sc.model.switch_params);
    SwitchSignals all_off{std::vector<bool>(bank.num_switches(), false), std::vector<bool>(bank.num_diodes(), false)};
    const auto entry = bank.get(all_off);
    Matrix Minv = Matrix::Zero(bank.num_ports(), bank.num_ports());
    if (bank.num_ports() > 0) {
        Minv = inverse_inductance(sc.model.table->inductance_at(sc.model.motion.position(0.0)));
    }
    return FrozenSystem::from_entry(*entry, bank.num_ports(), Minv);
}

int cmd_spectral(const std::string& scenario, const std::string& method_text, const std::string& sweep,
                 const std::string& out) {
    const auto method = method_from_string(method_text);
    std::string source;
    const auto sys = frozen_from_scenario(scenario, source);
    const auto hs = parse_sweep(sweep);
    std::ostringstream csv_out;
    csv_out << "# method=" << to_string(method) << "\n# backend=float64\n# scenario=" << scenario
            << "\n# scenario_hash=" << hash_text(source) << "\nh[s],rho\n";
    Real rho_max = 0.0, rho_min = std::numeric_limits<Real>::infinity();
    for (auto h : hs) {
        const auto rho = spectral_radius(one_step_matrix(method, sys, h));
        rho_max = std::max(rho_max, rho);
        rho_min = std::min(rho_min, rho);
        csv_out << csv::format_real(h) << "," << csv::format_real(rho) << "\n";
    }
    const auto path = output_path(out, "spectral_" + std::string(to_string(method)) + ".csv");
    csv::write_atomic(path, csv_out.str());
    std::cout << to_string(method) << " on " << scenario << ": " << hs.size() << " step sizes, rho in ["
              << csv::format_real(rho_min) << ", " << csv::format_real(rho_max) << "] -> " << path.string() << "\n";
    return ok;
}

int cmd_convergence(const std::string& problem_name, const std::string& method_text, const std::string& h_list,
                    const std::string& out) {
    const auto method = method_from_string(method_text);
    const auto problem = convergence_problem(problem_name);
    std::vector<Real> hs;
    if (h_list.empty()) {
        for (int k = 4; k <= 12; ++k) hs.push_back(std::ldexp(1.0, -k));
    } else {
        hs = parse_list(h_list);
    }
    const auto res = convergence_order(problem, method, hs);
    const auto path = output_path(out, "convergence_" + problem_name + "_" + std::string(to_string(method)) + ".csv");
    csv::write_atomic(path, res.to_csv({"method=" + std::string(to_string(method)), "backend=float64",
                                        "problem=" + problem_name,
                                        "scenario_hash=" + hash_text("convergence " + problem_name + " " + h_list)}));
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << problem_name << " " << to_string(method) << ": fitted order p = " << csv::format_real(res.order)
              << " -> " << path.string() << "\n";
    return ok;
}

int cmd_matrices(const std::string& scenario, const std::string& out) {
    const auto sc = load_scenario(scenario);
    std::vector<std::string> outputs;
    for (const auto& p : sc.model.probes) {
        if (p.signal.rfind("psi(", 0) != 0) outputs.push_back(p.signal);
    }
    StateSpaceBank bank(sc.model.netlist, sc.model.switch_params, outputs);
    SwitchSignals all_off{std::vector<bool>(bank.num_switches(), false), std::vector<bool>(bank.num_diodes(), false)};
    const auto entry = bank.get(all_off);
    const auto dir = output_path(out, "matrices/" + sc.name);
    fs::create_directories(dir);
    const auto path = dir / ("state_" + std::to_string(entry->key) + ".csv");
    bank.export_csv(*entry, path);
    std::cout << sc.name << ": n=" << bank.num_states() << " inputs=" << bank.num_inputs()
              << " ports=" << bank.num_ports() << " switches=" << bank.num_switches()
              << " diodes=" << bank.num_diodes() << " -> " << path.string() << "\n";
    return ok;
}

int cmd_table(const std::string& out) {
    const auto table = synth_table(SynthTableParams{});
    const auto path = output_path(out, "inductance_table.csv");
    table.save_csv(path);
    std::cout << table.size() << " rows -> " << path.string() << "\n";
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"imexsim - split implicit/explicit simulation of switched circuits with coupled coils"};
    app.require_subcommand(1);
    app.set_version_flag("--version", IMEXSIM_VERSION);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "run a scenario and write waveforms.csv + manifest.json");
    simulate->set_help_flag("--help", "print this help");
    simulate->add_option("scenario", sim.scenario, "scenario name or YAML file")->required();
    simulate->add_option("--method", sim.method, "imex | latency | forward-euler | trapezoidal");
    simulate->add_option("--backend", sim.backend, "float64 | fixed | fixed(T,I)");
    simulate->add_option("--h", sim.h, "step size in s");
    simulate->add_option("--t-end", sim.t_end, "end time in s");
    simulate->add_option("--out", sim.out, "output directory");
    simulate->add_option("--decimation", sim.decimation, "record every n-th step");
    simulate->add_option("--record-from", sim.record_from, "drop samples before this time");
    simulate->add_flag("--quiet", sim.quiet, "no progress output");

    CompareArgs cmp;
    auto* compare_cmd = app.add_subcommand("compare", "RMS/peak relative errors of run a against reference b");
    compare_cmd->add_option("a", cmp.a, "waveforms.csv (or its directory)")->required();
    compare_cmd->add_option("b", cmp.b, "reference waveforms.csv (or its directory)")->required();
    compare_cmd->add_option("--window", cmp.window, "t0 t1")->expected(2);
    compare_cmd->add_option("--tolerance", cmp.tolerance, "relative error bound; exceeding it exits with 4");
    compare_cmd->add_option("--probes", cmp.probes, "restrict to these probes")->delimiter(',');
    compare_cmd->add_option("--out", cmp.out, "metrics CSV path");

    std::string z0 = "-1";
    std::size_t points = 101;
    double range = 10.0;
    std::string stab_out;
    auto* stability = app.add_subcommand("stability", "|R(z0, z1)| over a z1 grid");
    stability->add_option("--z0", z0, "explicit eigenvalue times h, e.g. -1+0i");
    stability->add_option("--grid", points, "points per axis");
    stability->add_option("--range", range, "half-width of the square z1 grid");
    stability->add_option("--out", stab_out, "CSV path");

    std::string spec_scenario = "stiff", spec_method = "imex", spec_sweep = "10e-9:200e-9:10e-9", spec_out;
    auto* spectral = app.add_subcommand("spectral", "spectral radius of the one-step matrix over a step-size sweep");
    spectral->add_option("--scenario", spec_scenario, "stiff, or a scenario whose all-off state is analysed");
    spectral->add_option("--method", spec_method, "integration method");
    spectral->add_option("--h-sweep", spec_sweep, "START:STOP:STEP in s");
    spectral->add_option("--out", spec_out, "CSV path");

    std::string conv_problem = "cubic", conv_method = "imex", conv_h, conv_out;
    auto* convergence = app.add_subcommand("convergence", "global error against step size; fitted order");
    convergence->add_option("--problem", conv_problem, "cubic | linear");
    convergence->add_option("--method", conv_method, "integration method");
    convergence->add_option("--h-list", conv_h, "comma separated step sizes");
    convergence->add_option("--out", conv_out, "CSV path");

    std::string mat_scenario, mat_out;
    auto* matrices = app.add_subcommand("matrices", "export the all-off switching state matrices");
    matrices->add_option("scenario", mat_scenario, "scenario name or YAML file")->required();
    matrices->add_option("--out", mat_out, "output directory");

    std::string table_out;
    auto* table = app.add_subcommand("table", "write the synthetic inductance table");
    table->add_option("--out", table_out, "CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config_error;
    }

    std::string command_line;
    for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

    try {
        if (*simulate) return cmd_simulate(sim, command_line);
        if (*compare_cmd) return cmd_compare(cmp);
        if (*stability) return cmd_stability(z0, points, range, stab_out);
        if (*spectral) return cmd_spectral(spec_scenario, spec_method, spec_sweep, spec_out);
        if (*convergence) return cmd_convergence(conv_problem, conv_method, conv_h, conv_out);
        if (*matrices) return cmd_matrices(mat_scenario, mat_out);
        if (*table) return cmd_table(table_out);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return config_error;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return config_error;
    } catch (const TopologyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return config_error;
    } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << "\n";
        return diverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return failure;
    }
    return failure;
}
