#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "errors.hpp"
#include "numeric.hpp"

namespace fibham {

struct CouplingParams {
    double lambda = 0.0;

    explicit CouplingParams(double lam, bool oracle = false) : lambda(lam) {
        if (!(lam > 0.0) && !(oracle && lam == 0.0))
            throw DomainError("trace_core", "coupling must be positive (lambda = 0 only in oracle mode)");
    }
    double invariant_level() const { return lambda * lambda / 4.0; }
    static constexpr double alpha() { return kAlpha; }
    static constexpr double phi() { return kPhi; }
};

template <class T>
struct TraceVectorT {
    T x{}, y{}, z{};
};
using TraceVector = TraceVectorT<double>;

template <class T>
TraceVectorT<T> trace_map(const TraceVectorT<T>& v) {
    return {T(2) * v.x * v.y - v.z, v.x, v.y};
}

template <class T>
T fricke_vogt(const TraceVectorT<T>& v) {
    return v.x * v.x + v.y * v.y + v.z * v.z - T(2) * v.x * v.y * v.z - T(1);
}

template <class T>
TraceVectorT<T> line_point(T lambda, T E) {
    return {(E - lambda) / T(2), E / T(2), T(1)};
}

inline TraceVector line_point(double lambda, double E) { return line_point<double>(lambda, E); }

// x_{-1}, x_0, ..., x_K stored at offset +1.
struct TraceSequence {
    double lambda = 0.0;
    double energy = 0.0;
    std::vector<double> values;
    std::optional<std::vector<LogScalar>> derivatives;

    int k_max() const { return static_cast<int>(values.size()) - 2; }
    double x(int k) const { return values.at(k + 1); }
    LogScalar dx(int k) const { return derivatives.value().at(k + 1); }
};

struct TraceSequenceLog {
    double lambda = 0.0;
    double energy = 0.0;
    std::vector<LogScalar> values;
    std::vector<LogScalar> derivatives;

    int k_max() const { return static_cast<int>(values.size()) - 2; }
    LogScalar x(int k) const { return values.at(k + 1); }
    LogScalar dx(int k) const { return derivatives.at(k + 1); }
};

inline TraceSequence trace_sequence(double lambda, double E, int k_max, bool with_derivatives) {
    if (k_max < 0) throw DomainError("trace_core", "trace_sequence: k_max must be >= 0");
    TraceSequence s;
    s.lambda = lambda;
    s.energy = E;
    s.values.resize(k_max + 2);
    s.values[0] = 1.0;
    s.values[1] = E / 2.0;
    if (k_max >= 1) s.values[2] = (E - lambda) / 2.0;
    for (int i = 3; i < k_max + 2; ++i) {
        const double v = 2.0 * s.values[i - 1] * s.values[i - 2] - s.values[i - 3];
        if (!std::isfinite(v) || std::fabs(v) > 1e300)
            throw OverflowError("trace_core", "trace_sequence: |x_" + std::to_string(i - 1) +
                                                  "| exceeds double range; use trace_sequence_log");
        s.values[i] = v;
    }
    if (with_derivatives) {
        std::vector<LogScalar> d(k_max + 2);
        d[0] = LogScalar::zero();
        d[1] = LogScalar::from(0.5);
        if (k_max >= 1) d[2] = LogScalar::from(0.5);
        for (int i = 3; i < k_max + 2; ++i) {
            const LogScalar two = LogScalar::from(2.0);
            d[i] = two * (d[i - 1] * LogScalar::from(s.values[i - 2]) + LogScalar::from(s.values[i - 1]) * d[i - 2]) -
                   d[i - 3];
        }
        s.derivatives = std::move(d);
    }
    return s;
}

inline TraceSequenceLog trace_sequence_log(double lambda, double E, int k_max) {
    if (k_max < 0) throw DomainError("trace_core", "trace_sequence_log: k_max must be >= 0");
    TraceSequenceLog s;
    s.lambda = lambda;
    s.energy = E;
    s.values.resize(k_max + 2);
    s.derivatives.resize(k_max + 2);
    s.values[0] = LogScalar::from(1.0);
    s.values[1] = LogScalar::from(E / 2.0);
    s.derivatives[0] = LogScalar::zero();
    s.derivatives[1] = LogScalar::from(0.5);
    if (k_max >= 1) {
        s.values[2] = LogScalar::from((E - lambda) / 2.0);
        s.derivatives[2] = LogScalar::from(0.5);
    }
    const LogScalar two = LogScalar::from(2.0);
    for (int i = 3; i < k_max + 2; ++i) {
        s.values[i] = two * s.values[i - 1] * s.values[i - 2] - s.values[i - 3];
        s.derivatives[i] =
            two * (s.derivatives[i - 1] * s.values[i - 2] + s.values[i - 1] * s.derivatives[i - 2]) -
            s.derivatives[i - 3];
    }
    return s;
}

template <class Real>
struct TraceEval {
    Real x;
    Real dx;
};

template <class Real>
constexpr Real saturation_bound();
template <>
constexpr double saturation_bound<double>() { return 1e150; }
template <>
constexpr wide saturation_bound<wide>() { return wide(1e300) * wide(1e300) * wide(1e300) * wide(1e300); }

// Once two consecutive |x_j| exceed the bound the orbit escapes and only signs
// matter: sign(x_{j+2}) = sign(x_{j+1}) sign(x_j). Values are then clamped to the bound.
template <class Real>
Real saturated_tail(Real x0, Real x1, int steps_left) {
    int s0 = sign_r(x0), s1 = sign_r(x1);
    for (int i = 0; i < steps_left; ++i) {
        const int s2 = s1 * s0;
        s0 = s1;
        s1 = s2;
    }
    return Real(s1) * saturation_bound<Real>();
}

// x_k(E) and x_k'(E) at working precision Real.
template <class Real>
TraceEval<Real> trace_eval(Real lambda, Real E, int k) {
    if (k < 0) return {Real(1), Real(0)};
    Real xm1 = 1, x0 = E / 2, dm1 = 0, d0 = Real(1) / 2;
    if (k == 0) return {x0, d0};
    Real x1 = (E - lambda) / 2, d1 = Real(1) / 2;
    const Real big = saturation_bound<Real>();
    for (int i = 1; i < k; ++i) {
        if (abs_r(x1) > big && abs_r(x0) > big) {
            const Real v = saturated_tail(x0, x1, k - i);
            return {v, v};
        }
        const Real x2 = 2 * x1 * x0 - xm1;
        const Real d2 = 2 * (d1 * x0 + x1 * d0) - dm1;
        xm1 = x0;
        x0 = x1;
        x1 = x2;
        dm1 = d0;
        d0 = d1;
        d1 = d2;
    }
    return {x1, d1};
}

template <class Real>
Real trace_value(Real lambda, Real E, int k) {
    if (k < 0) return Real(1);
    Real xm1 = 1, x0 = E / 2;
    if (k == 0) return x0;
    Real x1 = (E - lambda) / 2;
    const Real big = saturation_bound<Real>();
    for (int i = 1; i < k; ++i) {
        if (abs_r(x1) > big && abs_r(x0) > big) return saturated_tail(x0, x1, k - i);
        const Real x2 = 2 * x1 * x0 - xm1;
        xm1 = x0;
        x0 = x1;
        x1 = x2;
    }
    return x1;
}

// Potential value at site n: lambda * chi_[1-alpha,1)(n alpha + omega mod 1).
inline double potential_value(long long n, double omega, double lambda) {
    const double v = frac(static_cast<double>(n) * kAlpha + omega);
    return v >= 1.0 - kAlpha ? lambda : 0.0;
}

// M(n) = T(n)...T(1) for n > 0, and T(n+1)^{-1}...T(0)^{-1} for n < 0.
inline Eigen::Matrix2cd transfer_matrix(long long n, double omega, std::complex<double> z, double lambda) {
    if (n == 0) throw DomainError("trace_core", "transfer_matrix: n must be nonzero");
    Eigen::Matrix2cd m = Eigen::Matrix2cd::Identity();
    if (n > 0) {
        for (long long l = 1; l <= n; ++l) {
            Eigen::Matrix2cd t;
            t << z - potential_value(l, omega, lambda), -1.0, 1.0, 0.0;
            m = t * m;
        }
    } else {
        for (long long l = 0; l >= n + 1; --l) {
            Eigen::Matrix2cd tinv;
            tinv << 0.0, 1.0, -1.0, z - potential_value(l, omega, lambda);
            m = tinv * m;
        }
    }
    return m;
}

// Largest real root of x^3 - (2 + lambda) x - 1.
inline double a_lambda(double lambda) {
    if (lambda < 0.0) throw DomainError("trace_core", "a_lambda: lambda must be >= 0");
    const double c = 2.0 + lambda;
    auto f = [c](double x) { return x * x * x - c * x - 1.0; };
    double lo = std::sqrt(c), hi = std::sqrt(c) + 1.0;  // f(lo) = -1 < 0 < f(hi)
    double x = hi;
    for (int it = 0; it < 200; ++it) {
        const double fx = f(x);
        if (fx == 0.0) return x;
        if (fx > 0) hi = x; else lo = x;
        double nx = x - fx / (3.0 * x * x - c);
        if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
        if (std::fabs(nx - x) <= 4 * std::numeric_limits<double>::epsilon() * x) return nx;
        x = nx;
    }
    return x;
}

}  // namespace fibham
