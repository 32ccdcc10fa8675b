#include <catch_amalgamated.hpp>

#include "imexsim/csv.hpp"
#include "imexsim/waveform.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace imexsim;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

const fs::path& out_root() {
    static const fs::path root = [] {
        auto p = fs::temp_directory_path() / ("imexsim_cli_" + std::to_string(::getpid()));
        fs::create_directories(p);
        ::setenv("IMEXSIM_OUT_ROOT", p.c_str(), 1);
        return p;
    }();
    return root;
}

Result cli(const std::string& args) {
    (void)out_root();
    const std::string cmd = std::string("\"") + IMEXSIM_CLI_PATH + "\" " + args + " 2>/dev/null";
    Result r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    std::array<char, 4096> buf{};
    while (auto n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::vector<std::vector<double>> read_rows(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<double>> rows;
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(csv::parse_real(cell));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

TEST_CASE("simulate with zero end time", "[cli]") {
    const auto r = cli("simulate wpt_startup --t-end 0 --quiet --out zero");
    CHECK(r.code == 0);
    const auto w = WaveformSet::read_csv(out_root() / "zero" / "waveforms.csv");
    CHECK(w.num_samples() == 1);
    CHECK(fs::exists(out_root() / "zero" / "manifest.json"));
}

TEST_CASE("compare against itself and against a mismatched run", "[cli]") {
    REQUIRE(cli("simulate rc_charging --quiet --out rc").code == 0);
    const auto self = cli("compare rc rc --tolerance 0 --out self.csv");
    CHECK(self.code == 0);
    CHECK(fs::exists(out_root() / "self.csv"));
    CHECK(self.out.find("max relative error 0") != std::string::npos);

    REQUIRE(cli("simulate example_commented --t-end 100us --quiet --out buck").code == 0);
    const auto bad = cli("compare rc buck --out mismatch.csv");
    CHECK(bad.code == 2);
    CHECK_FALSE(fs::exists(out_root() / "mismatch.csv"));
}

TEST_CASE("stability grid for a stiff explicit eigenvalue", "[cli]") {
    const auto r = cli("stability --z0 -1+0i --grid 41 --range 4 --out stab.csv");
    REQUIRE(r.code == 0);
    // z0 = -1: |R| <= 1 exactly outside the unit disk around 2 (pole at z1 = 2)
    std::size_t checked = 0;
    std::ifstream in(out_root() / "stab.csv");
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header.empty()) {
            std::stringstream ss(line);
            std::string c;
            while (std::getline(ss, c, ',')) header.push_back(c);
            continue;
        }
        std::stringstream ss(line);
        std::string c;
        std::vector<std::string> cells;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        const double re = csv::parse_real(cells[0]), im = csv::parse_real(cells[1]);
        const double d = std::hypot(re - 2.0, im);
        if (std::abs(d - 1.0) < 1e-9 || cells[2] == "nan") continue;
        const double a = csv::parse_real(cells[2]);
        CHECK((a <= 1.0 + 1e-12) == (d >= 1.0));
        ++checked;
    }
    CHECK(checked > 1600);
}

TEST_CASE("convergence order of the split method on the cubic problem", "[cli]") {
    const auto r = cli("convergence --problem cubic --method imex --out conv.csv");
    REQUIRE(r.code == 0);
    const auto at = r.out.find("p = ");
    REQUIRE(at != std::string::npos);
    const double p = std::stod(r.out.substr(at + 4));
    CHECK(p >= 1.9);
    CHECK(p <= 2.1);
}

TEST_CASE("spectral sweep on the stiff circuit", "[cli]") {
    const auto r = cli("spectral --scenario stiff --method latency --h-sweep 10e-9:200e-9:10e-9 --out spec.csv");
    REQUIRE(r.code == 0);
    const auto rows = read_rows(out_root() / "spec.csv");
    REQUIRE(rows.size() == 20);
    bool unstable_near_75ns = false;
    for (const auto& row : rows)
        if (std::abs(row[0] - 80e-9) < 1e-12 || std::abs(row[0] - 70e-9) < 1e-12) unstable_near_75ns |= row[1] > 1.0;
    CHECK(unstable_near_75ns);
}

TEST_CASE("configuration errors exit with 2", "[cli]") {
    CHECK(cli("simulate no_such_scenario --quiet").code == 2);
    CHECK(cli("simulate wpt_startup --method leapfrog --quiet").code == 2);
    CHECK(cli("simulate wpt_startup --method latency --backend fixed --quiet").code == 2);
    CHECK(cli("spectral --scenario stiff --method imex --h-sweep 1:0:1").code == 2);
}

TEST_CASE("latency on the transit diverges and keeps its partial record", "[cli][slow]") {
    const auto r = cli("simulate wpt_transit --method latency --quiet --decimation 50 --out transit_latency");
    CHECK(r.code == 3);
    const auto dir = out_root() / "transit_latency";
    CHECK(fs::exists(dir / "DIVERGED"));
    const auto w = WaveformSet::read_csv(dir / "waveforms.csv");
    CHECK(w.num_samples() > 100);
    CHECK(w.time().back() < 0.22);
}
