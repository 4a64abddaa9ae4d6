#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

namespace fibham {

// Working precision for band geometry. At large coupling the level-k bands get
// narrower than double resolution long before the derivatives overflow.
using wide = __float128;

inline constexpr double kPhi = 1.6180339887498948482;
inline constexpr double kAlpha = 0.6180339887498948482;  // (sqrt5 - 1)/2
inline const double kLogPhi = std::log(kPhi);

inline double to_double(double x) { return x; }
inline double to_double(wide x) { return static_cast<double>(x); }

template <class Real>
inline Real abs_r(Real x) { return x < Real(0) ? -x : x; }

template <class Real>
inline int sign_r(Real x) { return (x > Real(0)) - (x < Real(0)); }

template <class Real>
struct precision_traits;

template <>
struct precision_traits<double> {
    static constexpr double epsilon = std::numeric_limits<double>::epsilon();
};

template <>
struct precision_traits<wide> {
    static constexpr double epsilon = 1.925929944387235853e-34;  // 2^-112
};

// Natural log of |x| without passing through an out-of-range double.
inline double log_abs(double x) { return std::log(std::fabs(x)); }

inline double log_abs(wide x) {
    if (x < 0) x = -x;
    if (x == 0) return -std::numeric_limits<double>::infinity();
    int shift = 0;
    const wide up = wide(1ULL << 63) * wide(1ULL << 63) * wide(1ULL << 63) * wide(1ULL << 63);  // 2^252
    while (x > wide(1e300)) { x /= up; shift += 252; }
    while (x < wide(1e-300)) { x *= up; shift -= 252; }
    return std::log(static_cast<double>(x)) + shift * std::log(2.0);
}

// Signed extended-range scalar: value = sign * exp(log_mag).
struct LogScalar {
    int sign = 0;
    double log_mag = 0.0;

    static LogScalar zero() { return {}; }
    static LogScalar from_log(int s, double lm) { return s == 0 ? LogScalar{} : LogScalar{s > 0 ? 1 : -1, lm}; }
    static LogScalar from(double v) { return v == 0.0 ? LogScalar{} : LogScalar{v > 0 ? 1 : -1, std::log(std::fabs(v))}; }
    static LogScalar from(wide v) { return v == 0 ? LogScalar{} : LogScalar{v > 0 ? 1 : -1, log_abs(v)}; }

    double value() const { return sign == 0 ? 0.0 : sign * std::exp(log_mag); }
    bool is_zero() const { return sign == 0; }
    LogScalar abs() const { return sign == 0 ? LogScalar{} : LogScalar{1, log_mag}; }
    LogScalar operator-() const { return {-sign, log_mag}; }

    friend LogScalar operator*(LogScalar a, LogScalar b) {
        if (a.sign == 0 || b.sign == 0) return {};
        return {a.sign * b.sign, a.log_mag + b.log_mag};
    }
    friend LogScalar operator/(LogScalar a, LogScalar b) {
        if (b.sign == 0) throw std::domain_error("LogScalar: division by zero");
        if (a.sign == 0) return {};
        return {a.sign * b.sign, a.log_mag - b.log_mag};
    }
    friend LogScalar operator+(LogScalar a, LogScalar b) {
        if (a.sign == 0) return b;
        if (b.sign == 0) return a;
        if (a.log_mag < b.log_mag) std::swap(a, b);
        const double d = b.log_mag - a.log_mag;  // <= 0
        if (a.sign == b.sign) return {a.sign, a.log_mag + std::log1p(std::exp(d))};
        if (d == 0.0) return {};
        return {a.sign, a.log_mag + std::log1p(-std::exp(d))};
    }
    friend LogScalar operator-(LogScalar a, LogScalar b) { return a + (-b); }
    friend LogScalar operator*(double s, LogScalar a) { return LogScalar::from(s) * a; }

    friend bool operator==(LogScalar a, LogScalar b) {
        return a.sign == b.sign && (a.sign == 0 || a.log_mag == b.log_mag);
    }
    friend bool operator<(LogScalar a, LogScalar b) {
        if (a.sign != b.sign) return a.sign < b.sign;
        if (a.sign == 0) return false;
        return a.sign > 0 ? a.log_mag < b.log_mag : a.log_mag > b.log_mag;
    }
    friend bool operator>(LogScalar a, LogScalar b) { return b < a; }
    friend bool operator<=(LogScalar a, LogScalar b) { return !(b < a); }
    friend bool operator>=(LogScalar a, LogScalar b) { return !(a < b); }
};

// Fibonacci numbers with F_0 = F_1 = 1 (so F_k is the degree of x_k).
inline std::uint64_t fib(int k) {
    if (k < 0 || k > 91) throw std::out_of_range("fib: index outside [0, 91]");
    std::uint64_t a = 1, b = 1;
    for (int i = 1; i < k; ++i) {
        const std::uint64_t c = a + b;
        a = b;
        b = c;
    }
    return k == 0 ? 1 : b;
}

// Fractional part v - floor(v); never negative.
inline double frac(double v) { return v - std::floor(v); }

// Lossless text form for doubles (17 significant digits).
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace fibham
