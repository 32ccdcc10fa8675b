#pragma once

#include "imexsim/linalg.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace imexsim {

struct DivergenceInfo {
    Real time = 0.0;
    std::string variable;
    std::string reason;
};

/// Time-indexed probe records. Column i holds probe names[i] in units[i].
class WaveformSet {
public:
    WaveformSet() = default;
    WaveformSet(std::vector<std::string> names, std::vector<std::string> units);

    [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
    [[nodiscard]] const std::vector<std::string>& units() const { return units_; }
    [[nodiscard]] const std::vector<Real>& time() const { return time_; }
    [[nodiscard]] const std::vector<Real>& column(std::size_t i) const { return columns_.at(i); }
    [[nodiscard]] const std::vector<Real>& column(std::string_view name) const;
    [[nodiscard]] std::optional<std::size_t> find(std::string_view name) const;
    [[nodiscard]] std::size_t num_probes() const { return names_.size(); }
    [[nodiscard]] std::size_t num_samples() const { return time_.size(); }

    void reserve(std::size_t samples);
    void append(Real t, std::span<const Real> values);

    /// Free-form key/value annotations written as header comments.
    std::map<std::string, std::string> metadata;
    std::optional<DivergenceInfo> divergence;
    [[nodiscard]] bool diverged() const { return divergence.has_value(); }

    [[nodiscard]] std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;
    [[nodiscard]] static WaveformSet read_csv(const std::filesystem::path& path);

private:
    std::vector<std::string> names_;
    std::vector<std::string> units_;
    std::vector<Real> time_;
    std::vector<std::vector<Real>> columns_;
};

/// Splits "I_rx1[A]" into {"I_rx1", "A"}; a missing suffix gives an empty unit.
[[nodiscard]] std::pair<std::string, std::string> split_unit(const std::string& header);

}  // namespace imexsim
