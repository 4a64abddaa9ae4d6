#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "band_engine.hpp"
#include "errors.hpp"
#include "numeric.hpp"

namespace fibham {

using IntMatrix = std::vector<std::vector<int>>;

struct MarkovModel {
    IntMatrix matrix;
    double perron_value = 0.0;
    std::vector<double> v;  // right Perron vector
    std::vector<double> u;  // left Perron vector, u.v = 1
    std::vector<double> p;  // stationary p_i = u_i v_i
    std::vector<std::vector<double>> transition;  // p_ij = A_ij v_j / (lambda v_i)

    int size() const { return static_cast<int>(matrix.size()); }
    bool admissible(const std::vector<int>& word) const {
        for (std::size_t i = 0; i + 1 < word.size(); ++i)
            if (!matrix[word[i]][word[i + 1]]) return false;
        return true;
    }
};

inline IntMatrix golden_mean_matrix() { return {{1, 1}, {1, 0}}; }

// Irreducibility: (I + A)^{N-1} has no zero entry.
inline bool is_transitive(const IntMatrix& a) {
    const int n = static_cast<int>(a.size());
    std::vector<std::vector<char>> r(n, std::vector<char>(n, 0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) r[i][j] = (i == j) || a[i][j];
    for (int step = 1; step < n; ++step) {
        std::vector<std::vector<char>> nr(n, std::vector<char>(n, 0));
        for (int i = 0; i < n; ++i)
            for (int l = 0; l < n; ++l)
                if (r[i][l])
                    for (int j = 0; j < n; ++j)
                        if (a[l][j] || l == j) nr[i][j] = 1;
        r.swap(nr);
    }
    for (const auto& row : r)
        for (char c : row)
            if (!c) return false;
    return true;
}

namespace detail {

// Perron vector of A by power iteration on A + I (same eigenvector, aperiodic).
inline std::vector<double> perron_vector(const IntMatrix& a, bool left) {
    const int n = static_cast<int>(a.size());
    std::vector<double> x(n, 1.0 / n), y(n);
    for (int it = 0; it < 100000; ++it) {
        for (int i = 0; i < n; ++i) {
            double s = x[i];
            for (int j = 0; j < n; ++j) s += (left ? a[j][i] : a[i][j]) * x[j];
            y[i] = s;
        }
        double norm = 0;
        for (double q : y) norm += q;
        double diff = 0;
        for (int i = 0; i < n; ++i) {
            y[i] /= norm;
            diff = std::max(diff, std::fabs(y[i] - x[i]));
        }
        x.swap(y);
        if (diff < 1e-16) break;
    }
    return x;
}

}  // namespace detail

inline MarkovModel parry_measure(const IntMatrix& a) {
    const int n = static_cast<int>(a.size());
    if (n == 0) throw DomainError("thermo", "parry_measure: empty matrix");
    for (const auto& row : a) {
        if (static_cast<int>(row.size()) != n) throw DomainError("thermo", "parry_measure: matrix not square");
        for (int x : row)
            if (x != 0 && x != 1) throw DomainError("thermo", "parry_measure: entries must be 0 or 1");
    }
    if (!is_transitive(a)) throw NotTransitive("thermo", "parry_measure: matrix is not transitive");
    MarkovModel m;
    m.matrix = a;
    m.v = detail::perron_vector(a, false);
    m.u = detail::perron_vector(a, true);
    // Rayleigh-type refinement of the Perron value: u A v / u v.
    double uav = 0, uv = 0;
    for (int i = 0; i < n; ++i) {
        uv += m.u[i] * m.v[i];
        for (int j = 0; j < n; ++j) uav += m.u[i] * a[i][j] * m.v[j];
    }
    m.perron_value = uav / uv;
    for (double& x : m.u) x /= uv;
    m.p.resize(n);
    for (int i = 0; i < n; ++i) m.p[i] = m.u[i] * m.v[i];
    m.transition.assign(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m.transition[i][j] = a[i][j] * m.v[j] / (m.perron_value * m.v[i]);
    return m;
}

inline double top_entropy(const IntMatrix& a) { return std::log(parry_measure(a).perron_value); }

// u_{i0} v_{in} / lambda^n for admissible words, else 0.
inline double cylinder_measure(const MarkovModel& m, const std::vector<int>& word) {
    if (word.empty() || !m.admissible(word)) return 0.0;
    return m.u[word.front()] * m.v[word.back()] / std::pow(m.perron_value, static_cast<double>(word.size() - 1));
}

inline double cylinder_measure_by_transitions(const MarkovModel& m, const std::vector<int>& word) {
    if (word.empty()) return 0.0;
    double q = m.p[word.front()];
    for (std::size_t i = 0; i + 1 < word.size(); ++i) q *= m.transition[word[i]][word[i + 1]];
    return q;
}

// ---------------------------------------------------------------------------
// Level-k pressure from band root derivatives.

struct PressureCurve {
    double lambda = 0.0;
    int level = 0;
    std::vector<double> t_grid;
    std::vector<double> values;
    double bowen_root = 0.0;
    double entropy_at_zero = 0.0;  // (1/k) log F_k
    double tangent_slope = 0.0;    // -(1/(k F_k)) sum log|x_k'|
    double tangent_intercept = 0.0;
    double gamma_intercept = 0.0;  // asymptote lines through (0, log phi)
    double alpha_intercept = 0.0;
};

// (1/k) log sum_j exp(-t L_j), evaluated as a log-sum-exp.
inline double pressure_value(const std::vector<double>& log_derivs, int k, double t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double l : log_derivs) mx = std::max(mx, -t * l);
    double s = 0;
    for (double l : log_derivs) s += std::exp(-t * l - mx);
    return (mx + std::log(s)) / k;
}

inline double bowen_root(const std::vector<double>& log_derivs, int k) {
    double lo = 0.0, hi = 2.0;
    const double plo = pressure_value(log_derivs, k, lo), phi = pressure_value(log_derivs, k, hi);
    if (!(plo > 0 && phi < 0))
        throw RootNotBracketed("thermo", "P_" + std::to_string(k) + " does not change sign on [0, 2]");
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        (pressure_value(log_derivs, k, mid) > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline std::vector<double> level_log_derivs(const BandHierarchy& h, int level) {
    const auto& lv = h.levels.at(level);
    std::vector<double> l(lv.size());
    for (std::size_t i = 0; i < lv.size(); ++i) l[i] = lv[i].deriv.log_mag;
    return l;
}

inline PressureCurve pressure_curve(const BandHierarchy& h, int level, const std::vector<double>& t_grid) {
    if (level < 1 || level > h.k_max())
        throw DomainError("thermo", "pressure_curve: level " + std::to_string(level) + " not available");
    const auto logs = level_log_derivs(h, level);
    PressureCurve c;
    c.lambda = h.lambda;
    c.level = level;
    c.t_grid = t_grid;
    c.values.reserve(t_grid.size());
    for (double t : t_grid) c.values.push_back(pressure_value(logs, level, t));
    c.entropy_at_zero = std::log(static_cast<double>(logs.size())) / level;
    c.bowen_root = bowen_root(logs, level);
    double sum = 0, mn = logs.front(), mx = logs.front();
    for (double l : logs) {
        sum += l;
        mn = std::min(mn, l);
        mx = std::max(mx, l);
    }
    // Lines anchored at the limiting value P(0) = log phi.
    c.tangent_slope = -sum / (static_cast<double>(level) * logs.size());
    c.tangent_intercept = -kLogPhi / c.tangent_slope;
    c.gamma_intercept = kLogPhi * level / mx;
    c.alpha_intercept = kLogPhi * level / mn;
    return c;
}

inline PressureCurve pressure_curve(double lambda, int level, const std::vector<double>& t_grid) {
    return pressure_curve(compute_bands(lambda, level), level, t_grid);
}

inline void write_pressure_csv(std::ostream& os, const PressureCurve& c) {
    os << "# intercepts: gamma=" << fmt17(c.gamma_intercept) << " dim_nu=" << fmt17(c.tangent_intercept)
       << " dim_sigma=" << fmt17(c.bowen_root) << " alpha=" << fmt17(c.alpha_intercept) << '\n';
    os << "t,P_k,line_gamma,line_dim_nu,line_alpha\n";
    for (std::size_t i = 0; i < c.t_grid.size(); ++i) {
        const double t = c.t_grid[i];
        os << fmt17(t) << ',' << fmt17(c.values[i]) << ',' << fmt17(kLogPhi * (1 - t / c.gamma_intercept)) << ','
           << fmt17(kLogPhi + c.tangent_slope * t) << ',' << fmt17(kLogPhi * (1 - t / c.alpha_intercept)) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Equidistribution of lineage words.
//
// A level-k band's ancestors give one state per level j: its type (A or B) where
// an ancestor sits, and a transit state where a B child skips a level: Ma below an
// A parent, Mb1/Mb2 below a B parent left/right of that parent's A child. The
// transitions A->Ma->B, B->A, B->Mb1->B, B->Mb2->B form a primitive graph with
// Perron value phi. The 1-block code {Ma, Mb1} -> 2, {A, B, Mb2} -> 1 maps it onto
// the golden-mean shift with equal entropy, so uniform band statistics converge
// to the golden-mean Parry measure.

enum class LineageState { A, B, Ma, Mb1, Mb2 };

inline int golden_symbol(LineageState s) {
    return (s == LineageState::Ma || s == LineageState::Mb1) ? 1 : 0;  // 0 <-> "1", 1 <-> "2"
}

// State sequence for band (level, 0-based index) over levels 0..level; levels
// below the lineage root are filled with -1.
inline std::vector<int> lineage_states(const BandHierarchy& h, int level, int index) {
    std::vector<int> st(level + 1, -1);
    const Band* b = &h.levels[level][index];
    while (true) {
        st[b->level] = static_cast<int>(b->type == BandType::A ? LineageState::A : LineageState::B);
        if (!b->parent) break;
        const Band& p = h.levels[b->parent->level][b->parent->index - 1];
        if (b->level - p.level == 2) {
            LineageState mid = LineageState::Ma;
            if (p.type == BandType::B) {
                // The parent's A child sits one level below it.
                const Band* achild = nullptr;
                for (const Band& c : h.levels[p.level + 1])
                    if (c.parent && c.parent->level == p.level && c.parent->index == p.index) achild = &c;
                mid = (achild && b->root < achild->root) ? LineageState::Mb1 : LineageState::Mb2;
            }
            st[p.level + 1] = static_cast<int>(mid);
        }
        b = &p;
    }
    return st;
}

struct EquidistributionResult {
    int word_len = 0;
    double l1 = 0.0;
    std::map<std::vector<int>, double> empirical;
    std::map<std::vector<int>, double> parry;
    double total = 0.0;  // sum of empirical frequencies
    int first_position = 0;
    int last_position = 0;
};

inline EquidistributionResult equidistribution_check(const BandHierarchy& h, int level, int word_len) {
    if (!(h.lambda > 4.0)) throw NotApplicable("thermo", "equidistribution_check requires lambda > 4");
    if (word_len < 1 || word_len > 6) throw DomainError("thermo", "equidistribution_check: word_len must be in [1, 6]");
    if (!h.typed()) throw DomainError("thermo", "equidistribution_check: hierarchy must be classified");
    if (level > h.k_max()) throw DomainError("thermo", "equidistribution_check: level not computed");
    // Positions within ceil(log k) of either end are dropped (boundary layer).
    const int margin = std::max(1, static_cast<int>(std::ceil(std::log(static_cast<double>(level)))));
    EquidistributionResult r;
    r.word_len = word_len;
    r.first_position = margin;
    r.last_position = level - margin - word_len + 1;
    if (r.last_position < r.first_position)
        throw DomainError("thermo", "equidistribution_check: level too small for word length");

    const MarkovModel gm = parry_measure(golden_mean_matrix());
    std::vector<int> w(word_len, 0);
    for (int code = 0; code < (1 << word_len); ++code) {
        for (int i = 0; i < word_len; ++i) w[i] = (code >> (word_len - 1 - i)) & 1;
        r.parry[w] = cylinder_measure(gm, w);
        r.empirical[w] = 0.0;
    }
    long long count = 0;
    const auto& lv = h.levels[level];
    for (std::size_t j = 0; j < lv.size(); ++j) {
        const auto st = lineage_states(h, level, static_cast<int>(j));
        for (int pos = r.first_position; pos <= r.last_position; ++pos) {
            for (int i = 0; i < word_len; ++i) {
                if (st[pos + i] < 0) throw StructureViolation("thermo", "lineage gap inside the counting window");
                w[i] = golden_symbol(static_cast<LineageState>(st[pos + i]));
            }
            r.empirical[w] += 1.0;
            ++count;
        }
    }
    for (auto& [word, f] : r.empirical) {
        f /= static_cast<double>(count);
        r.total += f;
        r.l1 += std::fabs(f - r.parry[word]);
    }
    return r;
}

}  // namespace fibham
