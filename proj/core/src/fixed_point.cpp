#include "imexsim/fixed_point.hpp"

#include "imexsim/errors.hpp"

#include <cmath>
#include <string>

namespace imexsim::fixed {

Raw Format::raw_max() const {
    return total_bits == 64 ? INT64_MAX : (Raw{1} << (total_bits - 1)) - 1;
}

Raw Format::raw_min() const {
    return total_bits == 64 ? INT64_MIN : -(Raw{1} << (total_bits - 1));
}

double Format::max_real() const { return std::ldexp(static_cast<double>(raw_max()), -frac_bits()); }

double Format::min_real() const { return std::ldexp(static_cast<double>(raw_min()), -frac_bits()); }

void Format::validate() const {
    if (!(2 <= integer_bits && integer_bits < total_bits && total_bits <= 64)) {
        throw ConfigError("fixed-point format needs 2 <= integer_bits < total_bits <= 64, got (" +
                          std::to_string(total_bits) + ", " + std::to_string(integer_bits) + ")");
    }
}

Wide round_shift(Wide value, int shift) {
    // Arithmetic right shift floors; the remainder is then in [0, 2^shift).
    const Wide q = value >> shift;
    const Wide r = value - (q << shift);
    const Wide half = Wide{1} << (shift - 1);
    if (r > half || (r == half && (q & 1) != 0)) {
        return q + 1;
    }
    return q;
}

Arithmetic::Arithmetic(Format format) : format_(format) {
    format_.validate();
    max_ = format_.raw_max();
    min_ = format_.raw_min();
    frac_ = format_.frac_bits();
    scale_ = std::ldexp(1.0, frac_);
}

void Arithmetic::record_saturation() {
    if (log_.count++ == 0) {
        log_.first_time = time_;
    }
}

Raw Arithmetic::saturate(Wide value) {
    if (value > max_) {
        record_saturation();
        return max_;
    }
    if (value < min_) {
        record_saturation();
        return min_;
    }
    return static_cast<Raw>(value);
}

Raw Arithmetic::quantize(double value) {
    if (std::isnan(value)) {
        record_saturation();
        return 0;
    }
    // Scaling by a power of two is exact; nearbyint rounds ties to even.
    const double scaled = std::nearbyint(value * scale_);
    const double limit = std::ldexp(1.0, format_.total_bits - 1);
    if (scaled >= limit) {
        record_saturation();
        return max_;
    }
    if (scaled < -limit) {
        record_saturation();
        return min_;
    }
    return static_cast<Raw>(scaled);
}

double Arithmetic::to_real(Raw raw) const { return static_cast<double>(raw) / scale_; }

Raw Arithmetic::add(Raw a, Raw b) { return saturate(Wide{a} + Wide{b}); }

Raw Arithmetic::sub(Raw a, Raw b) { return saturate(Wide{a} - Wide{b}); }

Wide Arithmetic::mul_wide(Raw a, Raw b) const { return round_shift(Wide{a} * Wide{b}, frac_); }

Raw Arithmetic::mul(Raw a, Raw b) { return saturate(mul_wide(a, b)); }

Raw Arithmetic::div(Raw a, Raw b) {
    if (b == 0) {
        record_saturation();
        return a >= 0 ? max_ : min_;
    }
    __extension__ typedef unsigned __int128 U;
    const bool negative = (a < 0) != (b < 0);
    const U num = static_cast<U>(a < 0 ? -Wide{a} : Wide{a}) << frac_;
    const U den = static_cast<U>(b < 0 ? -Wide{b} : Wide{b});

    // Restoring long division, one quotient bit per iteration.
    U quotient = 0;
    U remainder = 0;
    for (int bit = 127; bit >= 0; --bit) {
        remainder = (remainder << 1) | ((num >> bit) & 1);
        quotient <<= 1;
        if (remainder >= den) {
            remainder -= den;
            quotient |= 1;
        }
    }
    const U twice = remainder << 1;
    if (twice > den || (twice == den && (quotient & 1) != 0)) {
        ++quotient;
    }
    // |a| < 2^63 and frac <= 62, so the quotient is below 2^126.
    const Wide q = static_cast<Wide>(quotient);
    return saturate(negative ? -q : q);
}

void Arithmetic::matvec(std::span<const Raw> M, std::size_t rows, std::size_t cols,
                        std::span<const Raw> x, std::span<Raw> y) {
    for (std::size_t i = 0; i < rows; ++i) {
        const Raw* row = M.data() + i * cols;
        Wide acc = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            acc += mul_wide(row[j], x[j]);
        }
        y[i] = saturate(acc);
    }
}

void Arithmetic::matvec_add(std::span<const Raw> M, std::size_t rows, std::size_t cols,
                            std::span<const Raw> x, std::span<const Raw> base, std::span<Raw> y) {
    for (std::size_t i = 0; i < rows; ++i) {
        const Raw* row = M.data() + i * cols;
        Wide acc = base[i];
        for (std::size_t j = 0; j < cols; ++j) {
            acc += mul_wide(row[j], x[j]);
        }
        y[i] = saturate(acc);
    }
}

}  // namespace imexsim::fixed
