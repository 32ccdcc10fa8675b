#include "imexsim/waveform.hpp"

#include "imexsim/csv.hpp"
#include "imexsim/errors.hpp"

#include <sstream>

namespace imexsim {

WaveformSet::WaveformSet(std::vector<std::string> names, std::vector<std::string> units)
    : names_(std::move(names)), units_(std::move(units)), columns_(names_.size()) {
    if (units_.size() != names_.size()) {
        throw DimensionError("waveform: names and units differ in length");
    }
}

std::optional<std::size_t> WaveformSet::find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) {
            return i;
        }
    }
    return std::nullopt;
}

const std::vector<Real>& WaveformSet::column(std::string_view name) const {
    auto i = find(name);
    if (!i) {
        throw ConfigError("waveform has no probe '" + std::string(name) + "'");
    }
    return columns_[*i];
}

void WaveformSet::reserve(std::size_t samples) {
    time_.reserve(samples);
    for (auto& c : columns_) {
        c.reserve(samples);
    }
}

void WaveformSet::append(Real t, std::span<const Real> values) {
    if (values.size() != columns_.size()) {
        throw DimensionError("waveform: sample width does not match probe count");
    }
    time_.push_back(t);
    for (std::size_t i = 0; i < values.size(); ++i) {
        columns_[i].push_back(values[i]);
    }
}

std::pair<std::string, std::string> split_unit(const std::string& header) {
    auto open = header.find('[');
    if (open == std::string::npos || header.back() != ']') {
        return {header, ""};
    }
    return {header.substr(0, open), header.substr(open + 1, header.size() - open - 2)};
}

std::string WaveformSet::to_csv() const {
    std::ostringstream out;
    for (const auto& [key, value] : metadata) {
        out << "# " << key << "=" << value << "\n";
    }
    if (divergence) {
        out << "# diverged_at=" << csv::format_real(divergence->time) << "\n";
        out << "# diverged_variable=" << divergence->variable << "\n";
        out << "# diverged_reason=" << divergence->reason << "\n";
    }
    std::vector<std::string> header{"t[s]"};
    for (std::size_t i = 0; i < names_.size(); ++i) {
        header.push_back(units_[i].empty() ? names_[i] : names_[i] + "[" + units_[i] + "]");
    }
    out << csv::join(header) << "\n";
    std::string line;
    for (std::size_t k = 0; k < time_.size(); ++k) {
        line = csv::format_real(time_[k]);
        for (const auto& c : columns_) {
            line += ',';
            line += csv::format_real(c[k]);
        }
        out << line << "\n";
    }
    return out.str();
}

void WaveformSet::write_csv(const std::filesystem::path& path) const {
    csv::write_atomic(path, to_csv());
}

WaveformSet WaveformSet::read_csv(const std::filesystem::path& path) {
    auto table = csv::read_numeric(path);
    if (table.header.empty() || split_unit(table.header.front()).first != "t") {
        throw ConfigError("waveform file " + path.string() + " must start with a t[s] column");
    }
    std::vector<std::string> names;
    std::vector<std::string> units;
    for (std::size_t i = 1; i < table.header.size(); ++i) {
        auto [name, unit] = split_unit(table.header[i]);
        names.push_back(name);
        units.push_back(unit);
    }
    WaveformSet w(std::move(names), std::move(units));
    w.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) {
            throw ConfigError("waveform file " + path.string() + ": ragged row");
        }
        w.append(row[0], std::span<const Real>(row).subspan(1));
    }
    DivergenceInfo info;
    bool diverged = false;
    for (const auto& comment : table.comments) {
        auto eq = comment.find('=');
        if (eq == std::string::npos) {
            continue;
        }
        auto key = comment.substr(0, eq);
        auto value = comment.substr(eq + 1);
        if (key == "diverged_at") {
            diverged = true;
            info.time = csv::parse_real(value);
        } else if (key == "diverged_variable") {
            info.variable = value;
        } else if (key == "diverged_reason") {
            info.reason = value;
        } else {
            w.metadata[key] = value;
        }
    }
    if (diverged) {
        w.divergence = info;
    }
    return w;
}

}  // namespace imexsim
