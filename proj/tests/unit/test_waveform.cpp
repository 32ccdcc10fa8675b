#include <catch_amalgamated.hpp>

#include "imexsim/csv.hpp"
#include "imexsim/errors.hpp"
#include "imexsim/waveform.hpp"

#include <filesystem>
#include <random>

using namespace imexsim;

TEST_CASE("shortest round-trip formatting", "[csv]") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int k = 0; k < 10000; ++k) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(k % 40) - 20);
        CHECK(csv::parse_real(csv::format_real(v)) == v);
    }
    CHECK(csv::format_real(0.1) == "0.1");
    CHECK_THROWS_AS(csv::parse_real("1.0x"), ConfigError);
}

TEST_CASE("waveform csv round trip", "[waveform]") {
    WaveformSet w({"I_rx1", "U_tx"}, {"A", "V"});
    w.metadata["method"] = "imex";
    w.append(0.0, std::vector<Real>{1.0, -2.5});
    w.append(75e-9, std::vector<Real>{1.0 / 3.0, 1e-300});
    const auto path = std::filesystem::temp_directory_path() / "imexsim_wave_rt.csv";
    w.write_csv(path);
    const auto r = WaveformSet::read_csv(path);
    std::filesystem::remove(path);
    CHECK(r.names() == w.names());
    CHECK(r.units() == w.units());
    CHECK(r.time() == w.time());
    CHECK(r.column("I_rx1") == w.column("I_rx1"));
    CHECK(r.column(1) == w.column(1));
    CHECK(r.metadata.at("method") == "imex");
}

TEST_CASE("waveform shape checks", "[waveform]") {
    WaveformSet w({"a"}, {""});
    CHECK_THROWS_AS(w.append(0.0, std::vector<Real>{1.0, 2.0}), DimensionError);
    CHECK_FALSE(w.find("b"));
    CHECK(split_unit("I_rx1[A]") == std::pair<std::string, std::string>{"I_rx1", "A"});
    CHECK(split_unit("x") == std::pair<std::string, std::string>{"x", ""});
}
