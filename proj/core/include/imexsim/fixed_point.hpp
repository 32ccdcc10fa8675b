#pragma once

// =============================================================================
// Emulated two's-complement fixed-point arithmetic
// =============================================================================
// A value is a signed raw integer r with real value r * 2^-frac_bits, where
// frac_bits = total_bits - integer_bits and the sign bit is counted inside
// integer_bits. Products and quotients are computed exactly in 128-bit
// integers and rounded to nearest, ties to even. Results outside the format
// saturate and are counted; the first saturation time is remembered.
// =============================================================================

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace imexsim::fixed {

using Raw = std::int64_t;
__extension__ typedef __int128 Wide;

struct Format {
    int total_bits = 64;
    int integer_bits = 24;

    [[nodiscard]] int frac_bits() const { return total_bits - integer_bits; }
    [[nodiscard]] Raw raw_max() const;
    [[nodiscard]] Raw raw_min() const;
    [[nodiscard]] double max_real() const;
    [[nodiscard]] double min_real() const;
    /// Throws ConfigError unless 2 <= integer_bits < total_bits <= 64.
    void validate() const;

    [[nodiscard]] bool operator==(const Format&) const = default;
};

struct SaturationLog {
    std::uint64_t count = 0;
    std::optional<double> first_time;
};

/// Arithmetic unit for one format; owns the sticky saturation log of a run.
class Arithmetic {
public:
    explicit Arithmetic(Format format = {});

    [[nodiscard]] const Format& format() const { return format_; }
    [[nodiscard]] const SaturationLog& saturation() const { return log_; }
    void reset_saturation() { log_ = {}; }
    /// Simulation time attached to saturation events from now on.
    void set_time(double t) { time_ = t; }

    [[nodiscard]] Raw quantize(double value);
    [[nodiscard]] double to_real(Raw raw) const;

    [[nodiscard]] Raw add(Raw a, Raw b);
    [[nodiscard]] Raw sub(Raw a, Raw b);
    [[nodiscard]] Raw mul(Raw a, Raw b);
    [[nodiscard]] Raw div(Raw a, Raw b);

    /// Product a*b rounded to the format, without saturation (for accumulation).
    [[nodiscard]] Wide mul_wide(Raw a, Raw b) const;
    /// Saturates an accumulated value into the format.
    [[nodiscard]] Raw saturate(Wide value);

    /// y = M x with M stored row-major (rows x cols). Each product is rounded,
    /// the row sum is accumulated exactly and saturated once.
    void matvec(std::span<const Raw> M, std::size_t rows, std::size_t cols,
                std::span<const Raw> x, std::span<Raw> y);
    /// y = base + M x, same rounding rules.
    void matvec_add(std::span<const Raw> M, std::size_t rows, std::size_t cols,
                    std::span<const Raw> x, std::span<const Raw> base, std::span<Raw> y);

private:
    void record_saturation();

    Format format_;
    Raw max_;
    Raw min_;
    int frac_;
    double scale_;
    SaturationLog log_;
    double time_ = 0.0;
};

/// Rounds (value / 2^shift) to nearest, ties to even; shift >= 1.
[[nodiscard]] Wide round_shift(Wide value, int shift);

}  // namespace imexsim::fixed
