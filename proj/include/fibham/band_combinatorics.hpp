#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include "errors.hpp"
#include "numeric.hpp"

namespace fibham {

using bigint = boost::multiprecision::cpp_int;

// Row of a_{k,.} or b_{k,.} stored over [m_lo, m_lo + size).
struct SparseRow {
    int m_lo = 0;
    std::vector<bigint> v;

    bigint at(int m) const {
        if (m < m_lo || m >= m_lo + static_cast<int>(v.size())) return 0;
        return v[m - m_lo];
    }
    void set(int m, const bigint& x) {
        if (x == 0) return;
        if (v.empty()) {
            m_lo = m;
            v.push_back(x);
            return;
        }
        if (m < m_lo) {
            v.insert(v.begin(), m_lo - m, bigint(0));
            m_lo = m;
        }
        if (m >= m_lo + static_cast<int>(v.size())) v.resize(m - m_lo + 1, bigint(0));
        v[m - m_lo] = x;
    }
    int m_hi() const { return m_lo + static_cast<int>(v.size()) - 1; }
    bigint sum() const {
        bigint s = 0;
        for (const auto& x : v) s += x;
        return s;
    }
    bigint first_moment() const {
        bigint s = 0;
        for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * (m_lo + static_cast<int>(i));
        return s;
    }
};

struct CombTable {
    int k_max = 0;
    std::vector<bigint> fib;  // F_0 .. F_kmax
    std::vector<SparseRow> a, b;
    std::vector<bigint> A, B, C;

    bigint a_k(int k) const { return a.at(k).sum(); }
    bigint b_k(int k) const { return b.at(k).sum(); }
    double ratio(int k) const {
        return static_cast<double>(C.at(k)) / (static_cast<double>(k) * static_cast<double>(fib.at(k)));
    }
};

inline CombTable build_comb_table(int k_max) {
    if (k_max < 2) throw DomainError("band_combinatorics", "build_comb_table: k_max must be >= 2");
    CombTable t;
    t.k_max = k_max;
    t.fib.resize(k_max + 1);
    t.fib[0] = 1;
    t.fib[1] = 1;
    for (int k = 2; k <= k_max; ++k) t.fib[k] = t.fib[k - 1] + t.fib[k - 2];
    t.a.resize(k_max + 1);
    t.b.resize(k_max + 1);
    t.a[0].set(0, 1);
    t.b[1].set(0, 1);
    for (int k = 2; k <= k_max; ++k) {
        const SparseRow& b1 = t.b[k - 1];
        for (int m = b1.m_lo; m <= b1.m_hi(); ++m) t.a[k].set(m + 1, b1.at(m));
        const SparseRow& a2 = t.a[k - 2];
        const SparseRow& b2 = t.b[k - 2];
        const int lo = std::min(a2.v.empty() ? 1 << 20 : a2.m_lo, b2.v.empty() ? 1 << 20 : b2.m_lo);
        const int hi = std::max(a2.v.empty() ? -1 : a2.m_hi(), b2.v.empty() ? -1 : b2.m_hi());
        for (int m = lo; m <= hi; ++m) t.b[k].set(m + 1, a2.at(m) + 2 * b2.at(m));
    }
    t.A.resize(k_max + 1);
    t.B.resize(k_max + 1);
    t.C.resize(k_max + 1);
    for (int k = 0; k <= k_max; ++k) {
        t.A[k] = t.a[k].first_moment();
        t.B[k] = t.b[k].first_moment();
        t.C[k] = t.A[k] + t.B[k];
    }
    return t;
}

inline bigint binomial(int n, int r) {
    if (r < 0 || r > n) return 0;
    bigint c = 1;
    for (int i = 1; i <= r; ++i) c = c * (n - r + i) / i;
    return c;
}

// 2^{2k-3m-1} (m/(k-m)) binom(k-m, 2m-k) on ceil(k/2) <= m <= floor(2k/3), zero elsewhere.
inline bigint closed_form_a(int k, int m) {
    if (k == 0) return m == 0 ? 1 : 0;
    if (2 * m < k || 3 * m > 2 * k) return 0;
    const int e = 2 * k - 3 * m - 1;
    bigint num = binomial(k - m, 2 * m - k) * m;
    bigint den = k - m;
    if (e >= 0) num <<= e; else den <<= -e;
    if (num % den != 0)
        throw StructureViolation("band_combinatorics", "closed form not integral at k=" + std::to_string(k) +
                                                           ", m=" + std::to_string(m));
    return num / den;
}

// First k (>= 2) at which one of the aggregate recursions fails, if any.
inline std::optional<int> check_aggregate_recursions(const CombTable& t) {
    for (int k = 2; k <= t.k_max; ++k) {
        if (t.A[k] != t.B[k - 1] + t.fib[k - 2]) return k;
        if (t.B[k] != t.A[k - 2] + 2 * t.B[k - 2] + t.fib[k - 1]) return k;
        if (k >= 3 && t.C[k] != t.C[k - 1] + t.C[k - 2] + 2 * t.fib[k - 2]) return k;
    }
    return std::nullopt;
}

inline double comb_limit_target() { return 4.0 / (5.0 + std::sqrt(5.0)); }

struct CombLimit {
    double ratio_at_kmax = 0.0;
    double extrapolated = 0.0;
};

inline CombLimit comb_limit(const CombTable& t) {
    if (t.k_max < 20) throw DomainError("band_combinatorics", "comb_limit: k_max must be >= 20");
    // Least squares for ratio = beta + c/k over the top 10 levels.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = 10;
    for (int k = t.k_max - n + 1; k <= t.k_max; ++k) {
        const double x = 1.0 / k, y = t.ratio(k);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return {t.ratio(t.k_max), (sy - slope * sx) / n};
}

// (C_k - beta k F_k) / F_k, monitored for boundedness.
inline std::vector<double> residual_over_fib(const CombTable& t) {
    std::vector<double> r(t.k_max + 1, 0.0);
    const double beta = comb_limit_target();
    for (int k = 1; k <= t.k_max; ++k) r[k] = (t.ratio(k) - beta) * k;
    return r;
}

inline void write_comb_csv(std::ostream& os, const CombTable& t) {
    os << "k,F_k,a_k,b_k,A_k,B_k,C_k,C_k_over_kF_k\n";
    char buf[40];
    for (int k = 0; k <= t.k_max; ++k) {
        os << k << ',' << t.fib[k] << ',' << t.a_k(k) << ',' << t.b_k(k) << ',' << t.A[k] << ',' << t.B[k] << ','
           << t.C[k] << ',';
        if (k == 0) {
            os << "nan\n";
        } else {
            std::snprintf(buf, sizeof buf, "%.17g", t.ratio(k));
            os << buf << '\n';
        }
    }
}

}  // namespace fibham
