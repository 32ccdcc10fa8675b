#pragma once

// Scenario files (YAML). Two system kinds:
//
//   system: {kind: wpt, params: {...}}          the reference WPT model
//   system: {kind: netlist, elements: [...]}    any switched network
//
// Numeric fields accept plain numbers or strings with an SI prefix and an
// optional unit: "75n", "42.95uH", "1.5kV". A bare "m" means milli.

#include "imexsim/scenarios.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace imexsim {

/// "75n" -> 7.5e-8, "42.95uH" -> 4.295e-5, "1.5 kV" -> 1500. Throws ConfigError.
[[nodiscard]] Real parse_quantity(std::string_view text);

/// Parses scenario text; relative paths inside resolve against `base_dir`.
[[nodiscard]] ScenarioConfig parse_scenario(const std::string& text,
                                            const std::filesystem::path& base_dir = {});

[[nodiscard]] ScenarioConfig load_scenario_file(const std::filesystem::path& path);

/// A path, or a bare name looked up as <dir>/<name>.yaml in the scenario
/// directory (IMEXSIM_SCENARIO_DIR overrides the built-in location).
[[nodiscard]] ScenarioConfig load_scenario(std::string_view name_or_path);

[[nodiscard]] std::filesystem::path scenario_directory();

/// FNV-1a 64 of the scenario source, as 16 hex digits.
[[nodiscard]] std::string scenario_hash(const ScenarioConfig& scenario);

}  // namespace imexsim
