#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <ostream>
#include <string>
#include <vector>

#include "band_engine.hpp"
#include "errors.hpp"
#include "numeric.hpp"
#include "trace_core.hpp"

namespace fibham {

struct PotentialSpec {
    double lambda = 0.0;
    double omega = 0.0;
    int length = 0;
    std::vector<double> values;  // values[n-1] = V(n)
    bool substitution_checked = false;
};

// Prefix of the fixed point of a -> ab, b -> a, as 1 (a) / 0 (b).
inline std::vector<int> substitution_word(std::size_t length) {
    std::vector<int> w{1};
    while (w.size() < length) {
        std::vector<int> next;
        next.reserve(2 * w.size());
        for (int c : w) {
            next.push_back(1);
            if (c == 1) next.push_back(0);
        }
        w.swap(next);
    }
    w.resize(length);
    return w;
}

inline bool is_fibonacci_length(int n) {
    for (int k = 0; k <= 91; ++k) {
        if (fib(k) == static_cast<std::uint64_t>(n)) return true;
        if (fib(k) > static_cast<std::uint64_t>(n)) break;
    }
    return false;
}

inline PotentialSpec generate_potential(double lambda, double omega, int length) {
    if (length < 1) throw DomainError("operator_lab", "generate_potential: length must be >= 1");
    PotentialSpec p;
    p.lambda = lambda;
    p.omega = omega;
    p.length = length;
    p.values.resize(length);
    for (int n = 1; n <= length; ++n) p.values[n - 1] = potential_value(n, omega, lambda);
    // Sites n = 1..F_k at omega = 0 read the substitution word from its first letter.
    if (omega == 0.0 && is_fibonacci_length(length)) {
        const auto w = substitution_word(length);
        for (int n = 0; n < length; ++n) {
            const int bit = potential_value(n + 1, 0.0, 1.0) > 0 ? 1 : 0;
            if (bit != w[n])
                throw StructureViolation("operator_lab", "circle word differs from substitution word at n = " +
                                                             std::to_string(n + 1));
        }
        p.substitution_checked = true;
    }
    return p;
}

struct IdsValue {
    long long count = 0;  // eigenvalues <= E
    int length = 0;
    double value = 0.0;   // count / length
    bool perturbed = false;  // E hit an eigenvalue and was shifted by 1e-12
};

namespace detail {

// Negative pivots of the LDL^T factorization of H - E (Sylvester inertia).
inline long long sturm_negatives(const std::vector<double>& v, double e, bool& hit_zero) {
    long long neg = 0;
    double d = 1.0;
    hit_zero = false;
    for (std::size_t i = 0; i < v.size(); ++i) {
        d = (v[i] - e) - (i == 0 ? 0.0 : 1.0 / d);
        if (d == 0.0) {
            hit_zero = true;
            return neg;
        }
        if (d < 0) ++neg;
    }
    return neg;
}

}  // namespace detail

inline IdsValue ids_finite(const PotentialSpec& p, double energy) {
    IdsValue r;
    r.length = p.length;
    bool hit = false;
    r.count = detail::sturm_negatives(p.values, energy, hit);
    if (hit) {
        r.perturbed = true;
        r.count = detail::sturm_negatives(p.values, energy + 1e-12, hit);
        if (hit) throw ConvergenceError("operator_lab", "ids_finite: shift still hits an eigenvalue");
    }
    r.value = static_cast<double>(r.count) / p.length;
    return r;
}

// ---------------------------------------------------------------------------
// Gap labels.

struct GapRecord {
    int level = 0;
    int gap_index = 0;  // gap to the right of band j
    double left = 0.0, right = 0.0;
    long long ids_num = 0, ids_den = 1;  // ids value j / F_k
    int label_m = 0;
    double label_error = 0.0;

    double ids_value() const { return static_cast<double>(ids_num) / static_cast<double>(ids_den); }
    double midpoint() const { return 0.5 * (left + right); }
};

struct GapLabeling {
    std::vector<GapRecord> gaps;
    std::vector<int> covered;  // labels m (|m| <= m_max, m != 0) matched within 2/F_k
    std::vector<int> missed;
};

inline GapLabeling gap_labels_from(const BandHierarchy& h, int level, int m_max) {
    if (level < 1 || level > h.k_max()) throw DomainError("operator_lab", "gap_labels: level not computed");
    const auto& lv = h.levels[level];
    const long long fk = static_cast<long long>(lv.size());
    GapLabeling out;
    for (std::size_t j = 0; j + 1 < lv.size(); ++j) {
        GapRecord g;
        g.level = level;
        g.gap_index = static_cast<int>(j) + 1;
        g.left = lv[j].right();
        g.right = lv[j + 1].left();
        g.ids_num = g.gap_index;
        g.ids_den = fk;
        const double target = g.ids_value();
        double best = 2.0;
        for (long long m = -fk; m <= fk; ++m) {
            const double err = std::fabs(target - frac(static_cast<double>(m) * kPhi));
            // Ties go to the smaller |m|, then to the positive label.
            if (err < best - 1e-15 || (std::fabs(err - best) <= 1e-15 && std::llabs(m) < std::abs(g.label_m))) {
                best = err;
                g.label_m = static_cast<int>(m);
            }
        }
        g.label_error = best;
        out.gaps.push_back(g);
    }
    const double tol = 2.0 / static_cast<double>(fk);
    for (int m = -m_max; m <= m_max; ++m) {
        if (m == 0) continue;
        // A label is covered when some gap carries it as its best match.
        bool hit = false;
        for (const GapRecord& g : out.gaps) hit = hit || (g.label_m == m && g.label_error < tol);
        (hit ? out.covered : out.missed).push_back(m);
    }
    return out;
}

// Throws CoverageFailure when a label with |m| <= m_max has no matching gap.
inline GapLabeling gap_labels(const BandHierarchy& h, int level, int m_max) {
    GapLabeling g = gap_labels_from(h, level, m_max);
    if (!g.missed.empty()) {
        std::string s;
        for (int m : g.missed) s += (s.empty() ? "" : ",") + std::to_string(m);
        throw CoverageFailure("operator_lab", "gap labels not covered at level " + std::to_string(level) + ": " + s);
    }
    return g;
}

inline GapLabeling gap_labels(double lambda, int level, int m_max) {
    return gap_labels(compute_bands(lambda, level), level, m_max);
}

inline void write_gaps_csv(std::ostream& os, const GapLabeling& g) {
    os << "level,j,left,right,m,label_error\n";
    for (const auto& r : g.gaps)
        os << r.level << ',' << r.gap_index << ',' << fmt17(r.left) << ',' << fmt17(r.right) << ',' << r.label_m << ','
           << fmt17(r.label_error) << '\n';
}

// ---------------------------------------------------------------------------
// Density of states scaling probe: uniform measure on level-k roots.

struct DosProbeEntry {
    double lo = 0.0, hi = 0.0;
    double measure = 0.0;
    double ratio = 0.0;  // log measure / log length
    bool is_band = false;
};

struct DosProbe {
    std::vector<DosProbeEntry> entries;
    double band_min = 0.0, band_mean = 0.0;
    double dyadic_min = 0.0, dyadic_mean = 0.0;
};

inline DosProbe dos_scaling_probe(const BandHierarchy& h, int level, int interval_count) {
    if (level < 1 || level > h.k_max()) throw DomainError("operator_lab", "dos_scaling_probe: level not computed");
    if (interval_count < 1) throw DomainError("operator_lab", "dos_scaling_probe: interval_count must be >= 1");
    const auto& lv = h.levels[level];
    const double w = 1.0 / static_cast<double>(lv.size());
    DosProbe p;
    double sum = 0;
    p.band_min = 1e300;
    for (const Band& b : lv) {
        DosProbeEntry e{b.left(), b.right(), w, 0.0, true};
        e.ratio = std::log(w) / std::log(b.width());
        p.band_min = std::min(p.band_min, e.ratio);
        sum += e.ratio;
        p.entries.push_back(e);
    }
    p.band_mean = sum / static_cast<double>(lv.size());

    // Dyadic cells of [-4, 4 + lambda) rounded up to a power of two, refinement
    // levels 3 .. 2 + interval_count; only cells shorter than 1 with positive mass.
    const double lo = -4.0;
    const double span = std::exp2(std::ceil(std::log2(8.0 + h.lambda)));
    std::vector<double> roots(lv.size());
    for (std::size_t i = 0; i < lv.size(); ++i) roots[i] = lv[i].center();
    double dsum = 0;
    long long dn = 0;
    p.dyadic_min = 1e300;
    for (int s = 3; s < 3 + interval_count; ++s) {
        const double cell = span / std::exp2(s);
        if (cell >= 1.0) continue;
        std::size_t i = 0;
        while (i < roots.size()) {
            const long long c = static_cast<long long>(std::floor((roots[i] - lo) / cell));
            std::size_t j = i;
            while (j < roots.size() && static_cast<long long>(std::floor((roots[j] - lo) / cell)) == c) ++j;
            DosProbeEntry e{lo + c * cell, lo + (c + 1) * cell, w * static_cast<double>(j - i), 0.0, false};
            e.ratio = std::log(e.measure) / std::log(cell);
            p.dyadic_min = std::min(p.dyadic_min, e.ratio);
            dsum += e.ratio;
            ++dn;
            p.entries.push_back(e);
            i = j;
        }
    }
    p.dyadic_mean = dn ? dsum / static_cast<double>(dn) : 0.0;
    if (!dn) p.dyadic_min = 0.0;
    return p;
}

// ---------------------------------------------------------------------------
// Transport: exact evolution of delta at the sample center from eigenpairs.

struct TransportRow {
    double T = 0.0;
    double moment = 0.0;  // time-averaged |X|^p moment
    double beta = 0.0;    // log moment / (p log T)
};

struct TransportResult {
    double lambda = 0.0, omega = 0.0, p = 0.0;
    int length = 0;
    std::vector<TransportRow> rows;
    double beta_fit = 0.0;          // least-squares slope of log moment vs p log T
    double max_unitarity_error = 0.0;
    double max_outside = 0.0;       // largest probability at |n| > 0.45 L over the used times
};

struct TransportOptions {
    int nodes = 512;
    double horizon = 16.0;     // integrate t <= horizon * T
    double t_min_factor = 1e-4;  // first node at t_min_factor * min(T)
    double outside_fraction = 0.45;
    double contamination_tol = 1e-8;
};

namespace detail {

// Node t = 0 plus n geometric nodes on [t0, t1]: a linear trapezoid panel on
// [0, t0], then the trapezoid rule in s = log t (weights carry dt/ds = t).
inline void geometric_nodes(double t0, double t1, int n, std::vector<double>& t, std::vector<double>& wt) {
    t.assign(n + 1, 0.0);
    wt.assign(n + 1, 0.0);
    const double s0 = std::log(t0), ds = (std::log(t1) - s0) / (n - 1);
    wt[0] = 0.5 * t0;
    for (int i = 0; i < n; ++i) {
        t[i + 1] = std::exp(s0 + i * ds);
        wt[i + 1] = t[i + 1] * ds * ((i == 0 || i == n - 1) ? 0.5 : 1.0);
    }
    wt[1] += 0.5 * t0;
}

}  // namespace detail

// (2/T) int_0^inf exp(-2t/T) f(t) dt on the node grid, truncated at horizon*T
// (the dropped tail weighs exp(-2 horizon) times a polynomial factor).
inline double exp_time_average(const std::vector<double>& t, const std::vector<double>& wt,
                               const std::vector<double>& f, double T, double horizon) {
    double num = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] > horizon * T) break;
        num += wt[i] * (2.0 / T) * std::exp(-2.0 * t[i] / T) * f[i];
    }
    return num;
}

// One evolution serves every p in `powers`; result i belongs to powers[i].
inline std::vector<TransportResult> transport_moments_multi(double lambda, double omega, int length,
                                                            const std::vector<double>& powers,
                                                            const std::vector<double>& T_grid,
                                                            const TransportOptions& opt = {}) {
    if (length < 8 || length > 4096) throw DomainError("operator_lab", "transport: L must be in [8, 4096]");
    if (T_grid.empty() || powers.empty()) throw DomainError("operator_lab", "transport: empty T grid or power list");
    const double t_lo = *std::min_element(T_grid.begin(), T_grid.end());
    const double t_hi = *std::max_element(T_grid.begin(), T_grid.end());
    if (!(t_lo > 0)) throw DomainError("operator_lab", "transport: T values must be positive");
    if (t_hi > length / 4.0) throw DomainError("operator_lab", "transport: max T exceeds L/4");

    const PotentialSpec pot = generate_potential(lambda, omega, length);
    Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(pot.values.data(), length);
    Eigen::VectorXd sub = Eigen::VectorXd::Ones(length - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) throw EigenFailure("operator_lab", "transport: tridiagonal eigensolver failed");
    const Eigen::VectorXd& ev = es.eigenvalues();
    const Eigen::MatrixXd& phi = es.eigenvectors();
    const int c = (length + 1) / 2 - 1;  // site ceil(L/2), 0-based

    std::vector<double> t, wt;
    detail::geometric_nodes(opt.t_min_factor * t_lo, opt.horizon * t_hi, opt.nodes, t, wt);
    const int nt = static_cast<int>(t.size());
    Eigen::MatrixXd cr(length, nt), ci(length, nt);
    for (int j = 0; j < length; ++j)
        for (int i = 0; i < nt; ++i) {
            const double a = ev[j] * t[i];
            cr(j, i) = phi(c, j) * std::cos(a);
            ci(j, i) = -phi(c, j) * std::sin(a);
        }
    const Eigen::MatrixXd re = phi * cr, im = phi * ci;

    std::vector<std::vector<double>> mom(powers.size(), std::vector<double>(nt, 0.0));
    std::vector<TransportResult> out(powers.size());
    double unit_err = 0, outside = 0;
    const double edge = opt.outside_fraction * length;
    for (int i = 0; i < nt; ++i) {
        double norm = 0, out_i = 0;
        for (int n = 0; n < length; ++n) {
            const double q = re(n, i) * re(n, i) + im(n, i) * im(n, i);
            norm += q;
            const double x = std::abs(n - c);
            if (x > edge) out_i += q;
            for (std::size_t k = 0; k < powers.size(); ++k) mom[k][i] += std::pow(x, powers[k]) * q;
        }
        unit_err = std::max(unit_err, std::fabs(norm - 1.0));
        outside = std::max(outside, out_i);
    }
    if (outside > opt.contamination_tol)
        throw BoundaryContamination("operator_lab", "probability " + fmt17(outside) + " beyond |n| > " +
                                                        fmt17(edge) + " within the integration horizon");
    for (std::size_t k = 0; k < powers.size(); ++k) {
        TransportResult& r = out[k];
        r.lambda = lambda;
        r.omega = omega;
        r.p = powers[k];
        r.length = length;
        r.max_unitarity_error = unit_err;
        r.max_outside = outside;
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (double T : T_grid) {
            TransportRow row;
            row.T = T;
            row.moment = exp_time_average(t, wt, mom[k], T, opt.horizon);
            row.beta = std::log(row.moment) / (r.p * std::log(T));
            r.rows.push_back(row);
            const double x = std::log(T), y = std::log(row.moment) / r.p;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double n = static_cast<double>(T_grid.size());
        r.beta_fit = n >= 2 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : r.rows.front().beta;
    }
    return out;
}

inline TransportResult transport_moments(double lambda, double omega, int length, double p,
                                         const std::vector<double>& T_grid, const TransportOptions& opt = {}) {
    return transport_moments_multi(lambda, omega, length, {p}, T_grid, opt).front();
}

inline void write_transport_csv(std::ostream& os, const TransportResult& r) {
    os << "T,moment,beta\n";
    for (const auto& row : r.rows) os << fmt17(row.T) << ',' << fmt17(row.moment) << ',' << fmt17(row.beta) << '\n';
}

}  // namespace fibham
