#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "numeric.hpp"
#include "trace_core.hpp"

namespace fibham {

enum class BandType { untyped, A, B };

inline const char* to_string(BandType t) {
    switch (t) {
        case BandType::A: return "A";
        case BandType::B: return "B";
        default: return "untyped";
    }
}

struct BandRef {
    int level = 0;
    int index = 0;  // 1-based
};

struct Band {
    int level = 0;
    int index = 0;  // 1-based, left to right
    wide lo = 0, hi = 0, root = 0;
    LogScalar deriv;  // signed x_k'(root)
    BandType type = BandType::untyped;
    std::optional<BandRef> parent;
    int m_count = 0;  // number of j in [0, k-1] with root in sigma_j

    double left() const { return to_double(lo); }
    double right() const { return to_double(hi); }
    double center() const { return to_double(root); }
    double width() const { return to_double(hi - lo); }
    double log_deriv() const { return deriv.log_mag; }
};

struct BandHierarchy {
    double lambda = 0.0;
    std::vector<std::vector<Band>> levels;
    int closed_gaps = 0;  // gaps that could not be opened at working precision
    int precision_limit = -1;  // first level lost to precision when stop_at_precision_limit is set

    int k_max() const { return static_cast<int>(levels.size()) - 1; }
    double delta_cap() const { return lambda * lambda / 4.0; }
    const std::vector<Band>& level(int k) const { return levels.at(k); }
    bool typed() const {
        return levels.size() > 2 && levels.back().front().type != BandType::untyped;
    }
};

struct BandOptions {
    int max_refinements = 30;
    // Return the levels computed so far instead of throwing PrecisionExhausted.
    bool stop_at_precision_limit = false;
};

namespace detail {

inline bool wide_close(wide a, wide b) {
    const wide scale = std::max(wide(1), std::max(abs_r(a), abs_r(b)));
    return abs_r(a - b) <= wide(16) * wide(precision_traits<wide>::epsilon) * scale;
}

// Root of g(E) = x_k(E) - target inside [lo, hi]; g(lo), g(hi) of opposite signs.
// Newton with a bisection fallback whenever the step leaves the bracket or fails
// to halve it.
inline wide solve_level(wide lam, int k, wide target, wide lo, wide hi) {
    const wide glo = trace_value(lam, lo, k) - target;
    if (glo == 0) return lo;
    const int slo = sign_r(glo);
    const wide eps = wide(precision_traits<wide>::epsilon);
    wide step_old = hi - lo, step = step_old;
    wide x = (lo + hi) / 2;
    for (int it = 0; it < 1000; ++it) {
        const auto ev = trace_eval(lam, x, k);
        const wide g = ev.x - target;
        if (g == 0) return x;
        if (sign_r(g) == slo) lo = x; else hi = x;
        const wide tol = wide(2) * eps * std::max(wide(1), abs_r(x));
        const bool newton_ok = ev.dx != 0 && abs_r(ev.x) < saturation_bound<wide>() &&
                               abs_r(2 * g) <= abs_r(step_old * ev.dx);
        wide nx = newton_ok ? x - g / ev.dx : lo;
        if (!newton_ok || !(nx > lo && nx < hi)) {
            step_old = step;
            step = (hi - lo) / 2;
            nx = lo + step;
        } else {
            step_old = step;
            step = abs_r(nx - x);
        }
        if (hi - lo <= tol || step <= tol / 2) return nx;
        x = nx;
    }
    throw ConvergenceError("band_engine", "root solver did not converge at level " + std::to_string(k));
}

inline wide polish_root(wide lam, int k, wide lo, wide hi) { return solve_level(lam, k, wide(0), lo, hi); }

// Roots of x_k from sign changes over a seeded grid, refined where the
// inclusion sigma_k in sigma_{k-1} u sigma_{k-2} allows roots.
inline std::vector<std::pair<wide, wide>> scan_brackets(wide lam, int k, std::vector<wide> seeds,
                                                        const BandOptions& opt) {
    const std::size_t expected = fib(k);
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
    std::vector<wide> vals(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) vals[i] = trace_value(lam, seeds[i], k);

    auto in_union = [&](wide e) {
        return abs_r(trace_value(lam, e, k - 1)) <= 1 || abs_r(trace_value(lam, e, k - 2)) <= 1;
    };
    bool restrict_union = true;
    int refine = 1;
    std::size_t found = 0;
    for (int pass = 0; pass <= opt.max_refinements; ++pass) {
        std::vector<std::pair<wide, wide>> br;
        for (std::size_t i = 0; i + 1 < seeds.size(); ++i) {
            if (vals[i] == 0) {
                br.emplace_back(seeds[i], seeds[i]);
            } else if ((vals[i] < 0) != (vals[i + 1] < 0) && vals[i + 1] != 0) {
                br.emplace_back(seeds[i], seeds[i + 1]);
            }
        }
        found = br.size();
        if (found == expected) return br;
        if (found > expected) break;
        std::vector<wide> ns, nv;
        ns.reserve(seeds.size() * 2);
        nv.reserve(seeds.size() * 2);
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            ns.push_back(seeds[i]);
            nv.push_back(vals[i]);
            if (i + 1 < seeds.size()) {
                const bool has_change = (vals[i] < 0) != (vals[i + 1] < 0);
                const wide mid = (seeds[i] + seeds[i + 1]) / 2;
                if (has_change || detail::wide_close(seeds[i], seeds[i + 1])) continue;
                if (restrict_union && !in_union(mid)) continue;
                ns.push_back(mid);
                nv.push_back(trace_value(lam, mid, k));
            }
        }
        if (ns.size() == seeds.size()) {
            if (!restrict_union) break;
            restrict_union = false;
        }
        seeds.swap(ns);
        vals.swap(nv);
        refine *= 2;
    }
    throw BandCountMismatch(k, static_cast<long long>(found), static_cast<long long>(expected), refine * 2);
}

// Band intervals around sorted roots: the gap between consecutive roots holds a
// single extremum of x_k, which is bracketed by bisection on the derivative sign.
inline void fill_edges(wide lam, int k, std::vector<Band>& bands, int& closed_gaps) {
    const std::size_t n = bands.size();
    const wide eps = wide(precision_traits<wide>::epsilon);
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const wide r0 = bands[j].root, r1 = bands[j + 1].root;
        const int s = bands[j].deriv.sign;  // sign of x_k on (r0, r1)
        wide lo = r0, hi = r1, g = (r0 + r1) / 2;
        bool open = false;
        for (int it = 0; it < 400; ++it) {
            g = (lo + hi) / 2;
            const auto ev = trace_eval(lam, g, k);
            if (s * ev.x > 1) { open = true; break; }
            if (s * ev.dx > 0) lo = g; else hi = g;
            if (hi - lo <= wide(4) * eps * std::max(wide(1), abs_r(g))) break;
        }
        if (!open) {
            ++closed_gaps;
            bands[j].hi = g;
            bands[j + 1].lo = g;
            continue;
        }
        bands[j].hi = solve_level(lam, k, wide(s), r0, g);
        bands[j + 1].lo = solve_level(lam, k, wide(s), g, r1);
    }
    // Outside the extreme roots x_k is monotone.
    auto outer = [&](std::size_t j, int dir) {
        const wide r = bands[j].root;
        const int s = dir * bands[j].deriv.sign;  // sign of x_k beyond r in direction dir
        wide step = wide(1) / wide(std::max(1.0, std::exp(std::min(bands[j].deriv.log_mag, 700.0))));
        wide p = r + wide(dir) * step;
        for (int it = 0; it < 2000 && s * trace_value(lam, p, k) <= 1; ++it) {
            step *= 2;
            p = r + wide(dir) * step;
        }
        return dir < 0 ? solve_level(lam, k, wide(s), p, r) : solve_level(lam, k, wide(s), r, p);
    };
    bands.front().lo = outer(0, -1);
    bands.back().hi = outer(n - 1, +1);
}

}  // namespace detail

inline BandHierarchy compute_bands(double lambda, int k_max, const BandOptions& opt = {}) {
    if (!(lambda > 0.0)) throw DomainError("band_engine", "compute_bands: lambda must be > 0");
    if (k_max < 0) throw DomainError("band_engine", "compute_bands: k_max must be >= 0");
    if (k_max > 60) throw DomainError("band_engine", "compute_bands: k_max above 60 is not supported");
    const wide lam = wide(lambda);
    const wide eps = wide(precision_traits<wide>::epsilon);
    BandHierarchy h;
    h.lambda = lambda;
    h.levels.resize(k_max + 1);

    // Discovery lineage used only for bracketing at lambda > 4.
    std::vector<std::vector<BandType>> kind(k_max + 1);
    std::vector<std::vector<int>> a_child(k_max + 1);  // index of the A child at level k+1 (0-based)

    for (int k = 0; k <= k_max; ++k) {
      try {
        std::vector<std::pair<wide, wide>> brackets;
        std::vector<BandType> kinds;
        if (k == 0) {
            brackets.emplace_back(wide(0), wide(0));
            kinds.push_back(BandType::A);
        } else if (k == 1) {
            brackets.emplace_back(lam, lam);
            kinds.push_back(BandType::B);
        } else {
            bool done = false;
            if (lambda > 4.0) {
                const auto& p1 = h.levels[k - 1];
                const auto& p2 = h.levels[k - 2];
                std::vector<std::pair<wide, wide>> br;
                std::vector<BandType> kd;
                for (std::size_t i = 0; i < p1.size(); ++i)
                    if (kind[k - 1][i] == BandType::B) {
                        br.emplace_back(p1[i].lo, p1[i].hi);
                        kd.push_back(BandType::A);
                    }
                for (std::size_t i = 0; i < p2.size(); ++i) {
                    if (kind[k - 2][i] == BandType::A) {
                        br.emplace_back(p2[i].lo, p2[i].hi);
                        kd.push_back(BandType::B);
                    } else {
                        const Band& c = p1[a_child[k - 2][i]];
                        br.emplace_back(p2[i].lo, c.lo);
                        br.emplace_back(c.hi, p2[i].hi);
                        kd.push_back(BandType::B);
                        kd.push_back(BandType::B);
                    }
                }
                bool ok = br.size() == fib(k);
                for (const auto& b : br) {
                    if (!ok) break;
                    const wide fa = trace_value(lam, b.first, k), fb = trace_value(lam, b.second, k);
                    ok = (fa < 0) != (fb < 0) && fa != 0 && fb != 0;
                }
                if (ok) {
                    brackets = std::move(br);
                    kinds = std::move(kd);
                    done = true;
                }
            }
            if (!done) {
                std::vector<wide> seeds{wide(-2.5), lam + wide(2.5)};
                for (int q = 1; q <= 2; ++q)
                    for (const Band& b : h.levels[k - q]) {
                        seeds.push_back(b.lo);
                        seeds.push_back(b.root);
                        seeds.push_back(b.hi);
                    }
                brackets = detail::scan_brackets(lam, k, std::move(seeds), opt);
                kinds.assign(brackets.size(), BandType::untyped);
            }
        }

        std::vector<std::size_t> order(brackets.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::vector<wide> roots(brackets.size());
        for (std::size_t i = 0; i < brackets.size(); ++i) {
            const auto& b = brackets[i];
            roots[i] = b.first == b.second ? b.first : detail::polish_root(lam, k, b.first, b.second);
        }
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return roots[a] < roots[b]; });

        auto& bands = h.levels[k];
        bands.resize(roots.size());
        kind[k].resize(roots.size());
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            Band& b = bands[pos];
            b.level = k;
            b.index = static_cast<int>(pos) + 1;
            b.root = roots[order[pos]];
            kind[k][pos] = kinds[order[pos]];
            const auto ev = trace_eval(lam, b.root, k);
            if (ev.dx == 0) throw PrecisionExhausted(k, "vanishing derivative at a root");
            b.deriv = LogScalar::from(ev.dx);
            // m counts j in [0, k-1] with |x_j(root)| <= 1; sigma_0 included so the
            // per-level m distribution equals the a_{k,m} + b_{k,m} table.
            wide xm1 = 1, x0 = b.root / 2, x1 = (b.root - lam) / 2;
            int m = (k >= 1 && abs_r(x0) <= 1) ? 1 : 0;
            for (int j = 1; j <= k - 1; ++j) {
                if (abs_r(x1) <= 1) ++m;
                const wide x2 = 2 * x1 * x0 - xm1;
                xm1 = x0;
                x0 = x1;
                x1 = x2;
            }
            b.m_count = m;
        }
        for (std::size_t pos = 1; pos < bands.size(); ++pos)
            if (!(bands[pos - 1].root < bands[pos].root))
                throw BandCountMismatch(k, static_cast<long long>(pos), static_cast<long long>(fib(k)), 2);
        detail::fill_edges(lam, k, bands, h.closed_gaps);
        for (const Band& b : bands) {
            const wide scale = std::max(wide(1), abs_r(b.root));
            if (!(b.hi - b.lo > wide(64) * eps * scale))
                throw PrecisionExhausted(k, "band width below working precision at E = " +
                                                std::to_string(to_double(b.root)));
        }

        if (lambda > 4.0 && k >= 1) {
            a_child[k - 1].assign(h.levels[k - 1].size(), -1);
            for (std::size_t pos = 0; pos < bands.size(); ++pos) {
                if (kind[k][pos] != BandType::A) continue;
                const auto& prev = h.levels[k - 1];
                auto it = std::upper_bound(prev.begin(), prev.end(), bands[pos].root,
                                           [](wide e, const Band& b) { return e < b.lo; });
                if (it != prev.begin()) a_child[k - 1][std::distance(prev.begin(), it) - 1] = static_cast<int>(pos);
            }
        }
      } catch (const PrecisionExhausted&) {
        if (!opt.stop_at_precision_limit || k < 3) throw;
        h.levels.resize(k);
        h.precision_limit = k;
        break;
      }
    }
    return h;
}

namespace detail {

// Band at `level` containing E, or nullptr.
inline const Band* containing(const std::vector<Band>& lv, wide e) {
    auto it = std::upper_bound(lv.begin(), lv.end(), e, [](wide x, const Band& b) { return x < b.lo; });
    if (it == lv.begin()) return nullptr;
    --it;
    return e <= it->hi ? &*it : nullptr;
}

}  // namespace detail

// Typing by containment in sigma_{k-1} (type A) or sigma_{k-2} (type B).
inline BandHierarchy classify_bands(BandHierarchy h) {
    if (!(h.lambda > 4.0)) throw NotApplicable("band_engine", "classify_bands requires lambda > 4");
    if (h.k_max() < 2) throw DomainError("band_engine", "classify_bands needs levels 0..2 at least");
    auto viol = [](const Band& b, const std::string& why) {
        return StructureViolation("band_engine", "band (level " + std::to_string(b.level) + ", index " +
                                                     std::to_string(b.index) + "): " + why);
    };
    h.levels[0][0].type = BandType::A;
    h.levels[1][0].type = BandType::B;
    for (int k = 2; k <= h.k_max(); ++k) {
        for (Band& b : h.levels[k]) {
            const Band* p1 = detail::containing(h.levels[k - 1], b.root);
            const Band* p2 = detail::containing(h.levels[k - 2], b.root);
            if (p1 && p2) throw viol(b, "root lies in both sigma_{k-1} and sigma_{k-2}");
            const Band* p = p1 ? p1 : p2;
            if (!p) throw viol(b, "root lies in neither sigma_{k-1} nor sigma_{k-2}");
            if (b.lo < p->lo || b.hi > p->hi) throw viol(b, "band not contained in its parent");
            b.type = p1 ? BandType::A : BandType::B;
            b.parent = BandRef{p->level, p->index};
        }
    }
    // Lemma structure: an A band holds one B band two levels down and nothing one
    // level down; a B band holds one A band one level down and two B bands two down.
    for (int k = 0; k + 2 <= h.k_max(); ++k) {
        std::vector<int> n1(h.levels[k].size(), 0), n2(h.levels[k].size(), 0);
        for (const Band& c : h.levels[k + 1])
            if (c.parent && c.parent->level == k) ++n1[c.parent->index - 1];
        for (const Band& c : h.levels[k + 2])
            if (c.parent && c.parent->level == k) ++n2[c.parent->index - 1];
        for (const Band& b : h.levels[k]) {
            const int i = b.index - 1;
            if (b.type == BandType::A && (n1[i] != 0 || n2[i] != 1)) throw viol(b, "A band with wrong children");
            if (b.type == BandType::B && (n1[i] != 1 || n2[i] != 2)) throw viol(b, "B band with wrong children");
        }
    }
    for (int k = 2; k <= h.k_max(); ++k) {
        std::size_t a = 0;
        for (const Band& b : h.levels[k]) a += b.type == BandType::A;
        if (a != fib(k - 2) || h.levels[k].size() - a != fib(k - 1))
            throw StructureViolation("band_engine", "type counts off at level " + std::to_string(k));
    }
    return h;
}

struct RootDerivatives {
    std::vector<std::pair<wide, LogScalar>> items;
    double min_log = 0.0;
    double max_log = 0.0;
    double sum_log = 0.0;
};

inline RootDerivatives root_derivatives(const BandHierarchy& h, int level) {
    if (level < 0 || level > h.k_max())
        throw DomainError("band_engine", "root_derivatives: level " + std::to_string(level) + " not computed");
    RootDerivatives r;
    const auto& lv = h.levels[level];
    r.items.reserve(lv.size());
    r.min_log = lv.front().deriv.log_mag;
    r.max_log = lv.front().deriv.log_mag;
    for (const Band& b : lv) {
        r.items.emplace_back(b.root, b.deriv);
        r.min_log = std::min(r.min_log, b.deriv.log_mag);
        r.max_log = std::max(r.max_log, b.deriv.log_mag);
        r.sum_log += b.deriv.log_mag;
    }
    return r;
}

struct SandwichConstants {
    double lower = 0.0;  // S_l
    double upper = 0.0;  // S_u
};

// Defined once (lambda - 4)^2 >= 12.
inline SandwichConstants sandwich_constants(double lambda) {
    const double q = (lambda - 4) * (lambda - 4) - 12;
    if (lambda < 4 || q < 0) throw DomainError("band_engine", "sandwich constants need lambda >= 4 + sqrt(12)");
    return {0.5 * ((lambda - 4) + std::sqrt(q)), 2 * lambda + 22};
}

struct SandwichViolation {
    int level = 0;
    int index = 0;
    int m = 0;
    double log_deriv = 0.0;
    double log_lower = 0.0;  // m log S_l
    double log_upper = 0.0;  // m log S_u
};

inline std::vector<SandwichViolation> sandwich_audit(const BandHierarchy& h, int level_from, int level_to) {
    const SandwichConstants s = sandwich_constants(h.lambda);
    std::vector<SandwichViolation> out;
    for (int k = level_from; k <= std::min(level_to, h.k_max()); ++k)
        for (const Band& b : h.levels.at(k)) {
            const double lo = b.m_count * std::log(s.lower), hi = b.m_count * std::log(s.upper);
            const double tol = 1e-12 * std::max(1.0, std::fabs(b.deriv.log_mag));
            if (b.deriv.log_mag < lo - tol || b.deriv.log_mag > hi + tol)
                out.push_back({k, b.index, b.m_count, b.deriv.log_mag, lo, hi});
        }
    return out;
}

// Bands at `level` where x_k does not change sign exactly once on a 32-point probe.
inline std::vector<BandRef> sign_probe_failures(const BandHierarchy& h, int level, int points = 32) {
    std::vector<BandRef> bad;
    const wide lam = wide(h.lambda);
    for (const Band& b : h.levels.at(level)) {
        int changes = 0, prev = 0;
        for (int i = 0; i < points; ++i) {
            const wide e = b.lo + (b.hi - b.lo) * wide(i) / wide(points - 1);
            const int sg = sign_r(trace_value(lam, e, level));
            if (sg != 0 && prev != 0 && sg != prev) ++changes;
            if (sg != 0) prev = sg;
        }
        if (changes != 1) bad.push_back({level, b.index});
    }
    return bad;
}

inline constexpr int kTwistedEigenCap = 16;

// Eigenvalues of the F_k-site omega = 0 periodic approximant with boundary twist
// e^{i pi/2}; these are the roots of x_k.
inline std::vector<double> twisted_eigen_roots(double lambda, int k) {
    if (k < 0) throw DomainError("band_engine", "twisted_eigen_roots: k must be >= 0");
    if (k > kTwistedEigenCap)
        throw DimensionTooLarge("band_engine", "twisted_eigen_roots: k = " + std::to_string(k) + " exceeds cap " +
                                                   std::to_string(kTwistedEigenCap));
    if (k == 0) return {0.0};
    const int n = static_cast<int>(fib(k));
    const std::complex<double> twist(0.0, 1.0);
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = potential_value(i + 1, 0.0, lambda);
    if (n == 1) return {std::real(m(0, 0)) + 2.0 * std::real(twist)};
    for (int i = 0; i + 1 < n; ++i) {
        m(i, i + 1) += 1.0;
        m(i + 1, i) += 1.0;
    }
    m(0, n - 1) += std::conj(twist);
    m(n - 1, 0) += twist;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw EigenFailure("band_engine", "twisted_eigen_roots: eigensolver failed");
    std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + n);
    std::sort(ev.begin(), ev.end());
    return ev;
}

struct KoebeBounds {
    LogScalar lower_inv_R;
    LogScalar upper_inv_r;
};

// Pass lambda to enforce delta < lambda^2/8; a non-positive lambda skips that check.
inline KoebeBounds koebe_radius_bounds(double delta, LogScalar min_deriv, double lambda = 0.0) {
    if (!(delta > 0.0)) throw DomainError("band_engine", "koebe_radius_bounds: delta must be > 0");
    if (lambda > 0.0 && !(delta < lambda * lambda / 8.0))
        throw DomainError("band_engine", "koebe_radius_bounds: delta must be < lambda^2/8");
    const double q = delta / ((1 + delta) * (1 + 2 * delta));
    const double u = (2 + 3 * delta) * (2 + 3 * delta) / ((1 + delta) * (1 + 2 * delta) * (1 + 2 * delta));
    return {LogScalar::from(q * q) * min_deriv, LogScalar::from(u) * min_deriv};
}

inline void write_bands_csv(std::ostream& os, const BandHierarchy& h, int level_from = 0, int level_to = -1) {
    if (level_to < 0) level_to = h.k_max();
    os << "level,index,left,right,root,log_deriv,type,m_count\n";
    for (int k = level_from; k <= level_to; ++k)
        for (const Band& b : h.levels.at(k))
            os << b.level << ',' << b.index << ',' << fmt17(b.left()) << ',' << fmt17(b.right()) << ','
               << fmt17(b.center()) << ',' << fmt17(b.log_deriv()) << ',' << to_string(b.type) << ','
               << b.m_count << '\n';
}

}  // namespace fibham
