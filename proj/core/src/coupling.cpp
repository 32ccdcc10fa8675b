#include "imexsim/coupling.hpp"

#include "imexsim/csv.hpp"
#include "imexsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace imexsim {

Matrix3 Inductances::matrix() const {
    Matrix3 m;
    m << Lp, M1, M2,
         M1, Ls1, 0.0,
         M2, 0.0, Ls2;
    return m;
}

bool Inductances::is_spd() const {
    const Real minor2 = Lp * Ls1 - M1 * M1;
    const Real det = Lp * Ls1 * Ls2 - Ls2 * M1 * M1 - Ls1 * M2 * M2;
    return Lp > 0.0 && minor2 > 0.0 && det > 0.0 && std::isfinite(det);
}

Inductances lerp(const Inductances& a, const Inductances& b, Real w) {
    auto mix = [w](Real p, Real q) { return (1.0 - w) * p + w * q; };
    return {mix(a.Lp, b.Lp), mix(a.Ls1, b.Ls1), mix(a.Ls2, b.Ls2), mix(a.M1, b.M1), mix(a.M2, b.M2)};
}

Matrix3 inverse_inductance(const Inductances& L) {
    const auto& [Lp, Ls1, Ls2, M1, M2] = L;
    const Real den = Ls2 * M1 * M1 + Ls1 * M2 * M2 - Lp * Ls1 * Ls2;
    // relative to the scale of the diagonal product; rounding leaves ~1e-16 at a true singularity
    const Real scale = std::abs(Lp * Ls1 * Ls2) + std::abs(Ls2 * M1 * M1) + std::abs(Ls1 * M2 * M2);
    if (!(std::abs(den) > 1e-12 * scale)) {
        throw SingularCouplingError("inductance matrix is singular (denominator " +
                                    csv::format_real(den) + ")");
    }
    Matrix3 adj;
    adj << -Ls1 * Ls2, Ls2 * M1, Ls1 * M2,
           Ls2 * M1, M2 * M2 - Lp * Ls2, -M1 * M2,
           Ls1 * M2, -M1 * M2, M1 * M1 - Lp * Ls1;
    return adj / den;
}

// -----------------------------------------------------------------------------
// InductanceTable
// -----------------------------------------------------------------------------

InductanceTable::InductanceTable(std::vector<Real> positions, std::vector<Inductances> rows,
                                 std::vector<std::string> comments)
    : positions_(std::move(positions)), rows_(std::move(rows)), comments_(std::move(comments)) {
    if (positions_.size() != rows_.size()) {
        throw DimensionError("inductance table: position and row counts differ");
    }
}

Inductances InductanceTable::inductance_at(Real x) const {
    if (rows_.empty()) {
        throw ConfigError("inductance table is empty");
    }
    if (!(x > positions_.front())) {
        return rows_.front();
    }
    if (x >= positions_.back()) {
        return rows_.back();
    }
    auto it = std::upper_bound(positions_.begin(), positions_.end(), x);
    const auto hi = static_cast<std::size_t>(it - positions_.begin());
    const auto lo = hi - 1;
    if (x == positions_[lo]) {
        return rows_[lo];
    }
    const Real w = (x - positions_[lo]) / (positions_[hi] - positions_[lo]);
    return lerp(rows_[lo], rows_[hi], w);
}

void InductanceTable::validate(std::size_t sweep) const {
    if (rows_.size() < 2) {
        throw ConfigError("inductance table needs at least 2 samples");
    }
    for (std::size_t i = 0; i < positions_.size(); ++i) {
        if (!std::isfinite(positions_[i])) {
            throw ConfigError("inductance table: non-finite position");
        }
        if (i > 0 && !(positions_[i] > positions_[i - 1])) {
            throw ConfigError("inductance table: positions must be strictly increasing (row " +
                              std::to_string(i) + ")");
        }
        if (!rows_[i].is_spd()) {
            throw ConfigError("inductance table: row at x=" + csv::format_real(positions_[i]) +
                              " is not positive definite");
        }
    }
    for (std::size_t j = 0; j < sweep; ++j) {
        const Real x = first() + (last() - first()) * static_cast<Real>(j) /
                                     static_cast<Real>(sweep > 1 ? sweep - 1 : 1);
        if (!inductance_at(x).is_spd()) {
            throw ConfigError("inductance table: interpolated matrix at x=" + csv::format_real(x) +
                              " is not positive definite");
        }
    }
}

namespace {
std::string strip_unit(const std::string& name) {
    auto pos = name.find('[');
    std::string out = pos == std::string::npos ? name : name.substr(0, pos);
    out.erase(std::remove_if(out.begin(), out.end(), [](unsigned char c) { return std::isspace(c); }),
              out.end());
    return out;
}
}  // namespace

InductanceTable InductanceTable::load_csv(const std::filesystem::path& path) {
    auto table = csv::read_numeric(path);
    const std::vector<std::string> expected{"x", "Lp", "Ls1", "Ls2", "M1", "M2"};
    std::vector<std::string> names;
    for (const auto& h : table.header) {
        names.push_back(strip_unit(h));
    }
    if (names != expected) {
        throw ConfigError("inductance table " + path.string() +
                          ": header must be x, Lp, Ls1, Ls2, M1, M2");
    }
    std::vector<Real> positions;
    std::vector<Inductances> rows;
    for (const auto& r : table.rows) {
        if (r.size() != 6) {
            throw ConfigError("inductance table " + path.string() + ": every row needs 6 fields");
        }
        positions.push_back(r[0]);
        rows.push_back({r[1], r[2], r[3], r[4], r[5]});
    }
    InductanceTable out(std::move(positions), std::move(rows), std::move(table.comments));
    out.validate();
    return out;
}

std::string InductanceTable::to_csv() const {
    std::ostringstream out;
    for (const auto& c : comments_) {
        out << "# " << c << "\n";
    }
    out << "x[m],Lp[H],Ls1[H],Ls2[H],M1[H],M2[H]\n";
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const auto& r = rows_[i];
        out << csv::join({csv::format_real(positions_[i]), csv::format_real(r.Lp),
                          csv::format_real(r.Ls1), csv::format_real(r.Ls2),
                          csv::format_real(r.M1), csv::format_real(r.M2)})
            << "\n";
    }
    return out.str();
}

void InductanceTable::save_csv(const std::filesystem::path& path) const {
    csv::write_atomic(path, to_csv());
}

// -----------------------------------------------------------------------------
// Synthetic table
// -----------------------------------------------------------------------------

Real raised_cosine_fall(Real x, Real center, Real width) {
    const Real start = center - 0.5 * width;
    if (x <= start) return 1.0;
    if (x >= center + 0.5 * width) return 0.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * (x - start) / width));
}

Real raised_cosine_bump(Real x, Real center, Real width) {
    const Real d = std::abs(x - center);
    if (d >= width) return 0.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * d / width));
}

InductanceTable synth_table(const SynthTableParams& p) {
    if (!(p.transition_width > 0.0)) {
        throw ConfigError("synthetic table: transition width must be positive");
    }
    if (!(p.span > 0.0) || p.samples < 2) {
        throw ConfigError("synthetic table: need a positive span and at least 2 samples");
    }
    if (!(p.floor_fraction >= 0.0 && p.floor_fraction < 1.0) ||
        !(p.lp_dip_fraction >= 0.0 && p.lp_dip_fraction < 1.0)) {
        throw ConfigError("synthetic table: fractions must lie in [0, 1)");
    }
    const Real c1 = 0.3 * p.span;
    const Real c2 = 0.6 * p.span;
    const Real cp = 0.5 * (c1 + c2);
    const auto& nom = p.nominal;

    std::vector<Real> positions;
    std::vector<Inductances> rows;
    for (std::size_t i = 0; i < p.samples; ++i) {
        const Real x = p.span * static_cast<Real>(i) / static_cast<Real>(p.samples - 1);
        Inductances r = nom;
        const Real m1_floor = p.floor_fraction * nom.M1;
        const Real m2_floor = p.floor_fraction * nom.M2;
        r.M1 = m1_floor + (nom.M1 - m1_floor) * raised_cosine_fall(x, c1, p.transition_width);
        r.M2 = nom.M2 - (nom.M2 - m2_floor) * raised_cosine_bump(x, c2, p.transition_width);
        r.Lp = nom.Lp * (1.0 - p.lp_dip_fraction * raised_cosine_bump(x, cp, p.transition_width));
        if (!r.is_spd()) {
            throw ConfigError("synthetic table: row at x=" + csv::format_real(x) +
                              " is not positive definite");
        }
        positions.push_back(x);
        rows.push_back(r);
    }
    InductanceTable table(std::move(positions), std::move(rows),
                          {"synthetic inductance table - generated, not measured data"});
    table.validate();
    return table;
}

// -----------------------------------------------------------------------------
// MotionProfile
// -----------------------------------------------------------------------------

MotionProfile MotionProfile::stationary(Real position) {
    MotionProfile m;
    m.kind_ = Kind::Stationary;
    m.x0_ = position;
    return m;
}

MotionProfile MotionProfile::constant_velocity(Real x0, Real velocity, Real t_start) {
    MotionProfile m;
    m.kind_ = Kind::ConstantVelocity;
    m.x0_ = x0;
    m.velocity_ = velocity;
    m.t_start_ = t_start;
    return m;
}

MotionProfile MotionProfile::piecewise(std::vector<Real> times, std::vector<Real> positions) {
    if (times.empty() || times.size() != positions.size()) {
        throw ConfigError("piecewise motion needs matching, non-empty time and position lists");
    }
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) {
            throw ConfigError("piecewise motion breakpoints must be strictly increasing in time");
        }
    }
    MotionProfile m;
    m.kind_ = Kind::Piecewise;
    m.times_ = std::move(times);
    m.positions_ = std::move(positions);
    m.x0_ = m.positions_.front();
    return m;
}

Real MotionProfile::position(Real t) const {
    switch (kind_) {
    case Kind::Stationary:
        return x0_;
    case Kind::ConstantVelocity:
        return t <= t_start_ ? x0_ : x0_ + velocity_ * (t - t_start_);
    case Kind::Piecewise: {
        if (t <= times_.front()) return positions_.front();
        if (t >= times_.back()) return positions_.back();
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const auto hi = static_cast<std::size_t>(it - times_.begin());
        const Real w = (t - times_[hi - 1]) / (times_[hi] - times_[hi - 1]);
        return (1.0 - w) * positions_[hi - 1] + w * positions_[hi];
    }
    }
    return x0_;
}

}  // namespace imexsim
