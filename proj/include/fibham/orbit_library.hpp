#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <ostream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "numeric.hpp"
#include "trace_core.hpp"

namespace fibham {

enum class OrbitFamily { period2, period4, numeric };

struct PeriodicOrbit {
    std::vector<TraceVector> points;
    int period = 0;
    double multiplier = 0.0;  // largest-modulus eigenvalue of the p-step Jacobian product
    double lyapunov_u = 0.0;  // log|multiplier| / period
    OrbitFamily family = OrbitFamily::numeric;
    double parameter = 0.0;   // a for P_a, b for Q_b
};

inline double period2_invariant(double a) {
    const double b = a / (2 * a - 1);
    return 2 * a * a + b * b - 2 * a * a * b - 1;
}

inline PeriodicOrbit solve_period2(double lambda) {
    if (lambda < 0) throw DomainError("orbit_library", "solve_period2: lambda must be >= 0");
    const double target = lambda * lambda / 4;
    double a = 1.0;
    if (target > 0) {
        double lo = 1.0, hi = 2.0;
        while (period2_invariant(hi) < target) {
            lo = hi;
            hi *= 2;
            if (hi > 1e6) throw BracketFailure("orbit_library", "solve_period2: no sign change up to a = 1e6");
        }
        for (int it = 0; it < 200 && hi - lo > 4 * std::numeric_limits<double>::epsilon() * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (period2_invariant(mid) < target ? lo : hi) = mid;
        }
        a = 0.5 * (lo + hi);
    }
    const double b = a / (2 * a - 1);
    const double c = (8 * a * a - 2 * a + 1) / (2 * a - 1);
    PeriodicOrbit o;
    o.points = {{a, b, a}, {b, a, b}};
    o.period = 2;
    o.multiplier = (c + std::sqrt(c * c - 4)) / 2;
    o.lyapunov_u = std::log(std::fabs(o.multiplier)) / 2;
    o.family = OrbitFamily::period2;
    o.parameter = a;
    return o;
}

inline PeriodicOrbit solve_period4(double lambda) {
    if (lambda < 0) throw DomainError("orbit_library", "solve_period4: lambda must be >= 0");
    // b^2 - b/2 - 1/2 = lambda^2/4, positive root.
    const double b = (0.5 + std::sqrt(2.25 + lambda * lambda)) / 2;
    const double c = 8 * (1 - 2 * b) * b + 1;
    PeriodicOrbit o;
    o.points = {{-0.5, b, -0.5}, {0.5 - b, -0.5, b}, {-0.5, 0.5 - b, -0.5}, {b, -0.5, 0.5 - b}};
    o.period = 4;
    const double disc = std::sqrt(c * c - 4);
    o.multiplier = c < 0 ? (c - disc) / 2 : (c + disc) / 2;
    o.lyapunov_u = std::log(std::fabs(o.multiplier)) / 4;
    o.family = OrbitFamily::period4;
    o.parameter = b;
    return o;
}

inline Eigen::Matrix3d trace_map_jacobian(const TraceVector& v) {
    Eigen::Matrix3d j;
    j << 2 * v.y, 2 * v.x, -1, 1, 0, 0, 0, 1, 0;
    return j;
}

struct NumericMultiplier {
    double multiplier = 0.0;
    double det = 0.0;
    Eigen::Vector3cd eigenvalues;
};

inline NumericMultiplier orbit_multiplier_details(const PeriodicOrbit& orbit) {
    if (orbit.points.empty()) throw DomainError("orbit_library", "orbit has no points");
    TraceVector p = orbit.points.front();
    Eigen::Matrix3d prod = Eigen::Matrix3d::Identity();
    for (int i = 0; i < orbit.period; ++i) {
        prod = trace_map_jacobian(p) * prod;
        p = trace_map(p);
    }
    const TraceVector& p0 = orbit.points.front();
    const double gap = std::max({std::fabs(p.x - p0.x), std::fabs(p.y - p0.y), std::fabs(p.z - p0.z)});
    if (gap > 1e-8) throw DomainError("orbit_library", "orbit does not close (gap " + std::to_string(gap) + ")");
    Eigen::EigenSolver<Eigen::Matrix3d> es(prod, false);
    if (es.info() != Eigen::Success) throw EigenFailure("orbit_library", "3x3 eigensolver failed");
    NumericMultiplier r;
    r.eigenvalues = es.eigenvalues();
    r.det = prod.determinant();
    int imax = 0;
    for (int i = 1; i < 3; ++i)
        if (std::abs(r.eigenvalues[i]) > std::abs(r.eigenvalues[imax])) imax = i;
    const std::complex<double> mu = r.eigenvalues[imax];
    if (std::fabs(mu.imag()) > 1e-9 * std::abs(mu))
        throw EigenFailure("orbit_library", "leading eigenvalue is not real");
    bool neutral = false;
    for (int i = 0; i < 3; ++i)
        if (std::abs(std::abs(r.eigenvalues[i]) - 1.0) < 1e-6 && std::fabs(r.eigenvalues[i].imag()) < 1e-6)
            neutral = true;
    if (!neutral || std::fabs(std::fabs(r.det) - 1.0) > 1e-9)
        throw EigenFailure("orbit_library", "Jacobian spectrum does not match {mu, +-1, 1/mu}");
    r.multiplier = mu.real();
    return r;
}

inline double orbit_multiplier_numeric(const PeriodicOrbit& orbit) { return orbit_multiplier_details(orbit).multiplier; }

inline double bound_curve_p6label(double lambda) {
    const double l2 = lambda * lambda, l4 = l2 * l2;
    return 4 * kLogPhi / (std::log(4 * l2 + std::sqrt(16 * l4 + 56 * l2 + 45) + 7) - std::log(2.0));
}

inline double bound_curve_p4label(double lambda) {
    const double l2 = lambda * lambda, l4 = l2 * l2;
    const double q = l4 + 8 * l2 + 18;
    return 6 * kLogPhi / (std::log(l4 + std::sqrt(q * q - 4) + 8 * l2 + 18) - std::log(2.0));
}

// The printed small-coupling Hoelder exponent formula.
inline double gamma_closed_form_ratio(double lambda) {
    const double I = lambda * lambda / 4;
    const double A = std::sqrt(16 * I + 25);
    const double B = std::sqrt(8 * I - std::sqrt(16 * I + 25) + 5);
    const double r2 = std::sqrt(2.0);
    const double inner = 256 * I * I + 16 * (2 * A + 3 * r2 * B + r2 * A * B + 35) * I + 22 * A + 75 * r2 * B +
                         21 * r2 * A * B + 250;
    const double num = r2 * std::sqrt(inner) + 16 * I + A + 2 * r2 * B + r2 * A * B + 23;
    return num / (2 * A + 2 * r2 * B - 2);
}

inline double gamma_closed_form(double lambda) {
    if (lambda < 0) throw DomainError("orbit_library", "gamma_closed_form: lambda must be >= 0");
    return 2 * kLogPhi / std::log(gamma_closed_form_ratio(lambda));
}

struct CohomologyReport {
    double lambda = 0.0;
    double a = 0.0;
    double cubic_at_a = 0.0;  // 8a^3 - 4a + 1
    double lyap_period2 = 0.0;
    double lyap_period4 = 0.0;
    bool distinct = false;
    bool cubic_ok = false;
};

inline CohomologyReport cohomology_check(double lambda) {
    const PeriodicOrbit p2 = solve_period2(lambda);
    const PeriodicOrbit p4 = solve_period4(lambda);
    CohomologyReport r;
    r.lambda = lambda;
    r.a = p2.parameter;
    r.cubic_at_a = 8 * r.a * r.a * r.a - 4 * r.a + 1;
    r.lyap_period2 = p2.lyapunov_u;
    r.lyap_period4 = p4.lyapunov_u;
    r.distinct = std::fabs(r.lyap_period2 - r.lyap_period4) > 1e-9 * std::max(1.0, r.lyap_period2);
    r.cubic_ok = r.cubic_at_a >= 5.0 - 1e-12;
    return r;
}

inline void write_orbit_curves_csv(std::ostream& os, const std::vector<double>& lambdas) {
    os << "lambda,bound_p6label,bound_p4label,gamma_closed_form,gamma_period2,lyap_period2,lyap_period4\n";
    for (double l : lambdas) {
        const PeriodicOrbit p2 = solve_period2(l);
        const PeriodicOrbit p4 = solve_period4(l);
        os << fmt17(l) << ',' << fmt17(bound_curve_p6label(l)) << ',' << fmt17(bound_curve_p4label(l)) << ','
           << fmt17(gamma_closed_form(l)) << ',' << fmt17(kLogPhi / p2.lyapunov_u) << ',' << fmt17(p2.lyapunov_u)
           << ',' << fmt17(p4.lyapunov_u) << '\n';
    }
}

}  // namespace fibham
