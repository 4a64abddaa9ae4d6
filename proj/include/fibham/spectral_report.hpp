#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "band_engine.hpp"
#include "errors.hpp"
#include "numeric.hpp"
#include "orbit_library.hpp"
#include "thermo.hpp"

namespace fibham {

inline constexpr const char* kLibraryVersion = "1.0.0";

struct SpectralEstimate {
    double value = 0.0;
    std::vector<std::pair<int, double>> per_level;
    double extrapolated = 0.0;
    double extrapolated_raw = 0.0;  // c + d/k fit before the hull safeguard
    double error_indicator = 0.0;   // spread of the top-3 levels
    double model_disagreement = 0.0;  // |extrapolated - last per-level value|
    bool clamped = false;           // extrapolation hit the hull safeguard
};

struct OrbitBounds {
    double bound_p6label = 0.0;
    double bound_p4label = 0.0;
    double gamma_closed_form = 0.0;
};

enum class ChainStatus { strict, inconclusive };

inline const char* to_string(ChainStatus s) { return s == ChainStatus::strict ? "STRICT" : "INCONCLUSIVE"; }

struct SpectralReport {
    double lambda = 0.0;
    int k_max = 0;
    int k_min = 0;
    int precision_limit = -1;
    SpectralEstimate gamma, dim_nu, dim_sigma, alpha;
    OrbitBounds orbit_bounds;
    ChainStatus chain = ChainStatus::inconclusive;
    std::vector<double> chain_margins;  // value gaps minus summed error indicators, three links
    bool per_level_order_ok = false;    // gamma_k <= dim_nu_k <= alpha_k at every level
    bool bowen_between_ok = false;      // gamma_k <= t*_k <= alpha_k at every level
    double box_dimension = 0.0;         // diagnostic from band covers at k_max
};

struct ReportOptions {
    int k_min = 4;       // first level used by the estimators
    int fit_levels = 5;  // top levels in the c + d/k fit
    bool stop_at_precision_limit = true;
};

namespace detail {

inline SpectralEstimate finish_estimate(std::vector<std::pair<int, double>> per_level, int fit_levels) {
    if (per_level.empty()) throw DomainError("spectral_report", "no levels available for the estimate");
    SpectralEstimate e;
    e.per_level = std::move(per_level);
    const int n = static_cast<int>(e.per_level.size());
    const int nt = std::min(3, n);
    double lo3 = e.per_level.back().second, hi3 = lo3;
    for (int i = n - nt; i < n; ++i) {
        lo3 = std::min(lo3, e.per_level[i].second);
        hi3 = std::max(hi3, e.per_level[i].second);
    }
    const double spread = hi3 - lo3;
    e.error_indicator = spread;
    const int nf = std::min(fit_levels, n);
    double ext = e.per_level.back().second;
    if (nf >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int i = n - nf; i < n; ++i) {
            const double x = 1.0 / e.per_level[i].first, y = e.per_level[i].second;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double den = nf * sxx - sx * sx;
        if (den > 0) ext = (sy - (nf * sxy - sx * sy) / den * sx) / nf;
    }
    const double lo = lo3 - 2 * spread, hi = hi3 + 2 * spread;
    e.extrapolated_raw = ext;
    e.clamped = ext < lo || ext > hi;
    e.extrapolated = std::clamp(ext, lo, hi);
    e.value = e.extrapolated;
    e.model_disagreement = std::fabs(e.extrapolated - e.per_level.back().second);
    return e;
}

inline int first_level(const BandHierarchy& h, int k_min) {
    if (h.k_max() < 1) throw DomainError("spectral_report", "hierarchy needs at least one level");
    return std::clamp(k_min, 1, h.k_max());
}

}  // namespace detail

inline double alpha_level(const BandHierarchy& h, int k) {
    return kLogPhi * k / root_derivatives(h, k).min_log;
}
inline double gamma_level(const BandHierarchy& h, int k) {
    return kLogPhi * k / root_derivatives(h, k).max_log;
}
inline double dim_nu_level(const BandHierarchy& h, int k) {
    const auto rd = root_derivatives(h, k);
    return kLogPhi * k * static_cast<double>(rd.items.size()) / rd.sum_log;
}
inline double dim_sigma_level(const BandHierarchy& h, int k) { return bowen_root(level_log_derivs(h, k), k); }

inline SpectralEstimate estimate_from(const BandHierarchy& h, const std::function<double(const BandHierarchy&, int)>& f,
                                      const ReportOptions& opt = {}) {
    std::vector<std::pair<int, double>> pl;
    for (int k = detail::first_level(h, opt.k_min); k <= h.k_max(); ++k) pl.emplace_back(k, f(h, k));
    return detail::finish_estimate(std::move(pl), opt.fit_levels);
}

inline BandHierarchy report_bands(double lambda, int k_max, const ReportOptions& opt) {
    BandOptions bo;
    bo.stop_at_precision_limit = opt.stop_at_precision_limit;
    return compute_bands(lambda, k_max, bo);
}

inline SpectralEstimate estimate_alpha(double lambda, int k_max, const ReportOptions& opt = {}) {
    return estimate_from(report_bands(lambda, k_max, opt), alpha_level, opt);
}
inline SpectralEstimate estimate_gamma(double lambda, int k_max, const ReportOptions& opt = {}) {
    return estimate_from(report_bands(lambda, k_max, opt), gamma_level, opt);
}
inline SpectralEstimate estimate_dim_nu(double lambda, int k_max, const ReportOptions& opt = {}) {
    return estimate_from(report_bands(lambda, k_max, opt), dim_nu_level, opt);
}
inline SpectralEstimate estimate_dim_sigma(double lambda, int k_max, const ReportOptions& opt = {}) {
    return estimate_from(report_bands(lambda, k_max, opt), dim_sigma_level, opt);
}

// Box-counting slope of sigma_{k-1} u sigma_k over dyadic cells, at scales
// between the widest level-k band and 1/4.
inline double box_count_dimension(const BandHierarchy& h, int k) {
    if (k < 2 || k > h.k_max()) throw DomainError("spectral_report", "box_count_dimension: level out of range");
    std::vector<std::pair<double, double>> iv;
    double wmax = 0;
    for (int q = k - 1; q <= k; ++q)
        for (const Band& b : h.levels[q]) {
            iv.emplace_back(b.left(), b.right());
            if (q == k) wmax = std::max(wmax, b.width());
        }
    std::vector<double> xs, ys;
    for (int j = 2; std::ldexp(1.0, -j) >= wmax && j < 60; ++j) {
        const double eps = std::ldexp(1.0, -j);
        std::set<long long> cells;
        for (const auto& [a, b] : iv)
            for (long long c = static_cast<long long>(std::floor(a / eps)); c <= static_cast<long long>(std::floor(b / eps));
                 ++c)
                cells.insert(c);
        xs.push_back(j * std::log(2.0));
        ys.push_back(std::log(static_cast<double>(cells.size())));
    }
    const int n = static_cast<int>(xs.size());
    if (n < 3) throw DomainError("spectral_report", "box_count_dimension: too few scales");
    // Fit over the finer half, where the cover resolves the Cantor structure.
    const int from = n / 2;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int m = n - from;
    for (int i = from; i < n; ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

inline SpectralReport full_report(const BandHierarchy& h, const ReportOptions& opt = {}) {
    SpectralReport r;
    r.lambda = h.lambda;
    r.k_max = h.k_max();
    r.k_min = detail::first_level(h, opt.k_min);
    r.precision_limit = h.precision_limit;
    r.gamma = estimate_from(h, gamma_level, opt);
    r.dim_nu = estimate_from(h, dim_nu_level, opt);
    r.dim_sigma = estimate_from(h, dim_sigma_level, opt);
    r.alpha = estimate_from(h, alpha_level, opt);
    r.orbit_bounds = {bound_curve_p6label(h.lambda), bound_curve_p4label(h.lambda), gamma_closed_form(h.lambda)};

    const SpectralEstimate* chain[4] = {&r.gamma, &r.dim_nu, &r.dim_sigma, &r.alpha};
    bool strict = true;
    for (int i = 0; i < 3; ++i) {
        const double margin =
            chain[i + 1]->value - chain[i]->value - (chain[i]->error_indicator + chain[i + 1]->error_indicator);
        r.chain_margins.push_back(margin);
        strict = strict && margin > 0;
    }
    r.chain = strict ? ChainStatus::strict : ChainStatus::inconclusive;

    r.per_level_order_ok = true;
    r.bowen_between_ok = true;
    for (std::size_t i = 0; i < r.gamma.per_level.size(); ++i) {
        const double g = r.gamma.per_level[i].second, nu = r.dim_nu.per_level[i].second;
        const double s = r.dim_sigma.per_level[i].second, a = r.alpha.per_level[i].second;
        if (!(g <= nu && nu <= a)) r.per_level_order_ok = false;
        if (!(g <= s && s <= a)) r.bowen_between_ok = false;
    }
    r.box_dimension = r.k_max >= 2 ? box_count_dimension(h, r.k_max) : 0.0;
    return r;
}

inline SpectralReport full_report(double lambda, int k_max, const ReportOptions& opt = {}) {
    return full_report(report_bands(lambda, k_max, opt), opt);
}

// value * log(lambda) targets at large coupling, in gamma, dim_nu, dim_sigma, alpha order.
inline std::vector<double> asymptotic_constants() {
    return {1.5 * kLogPhi, (5 + std::sqrt(5.0)) / 4 * kLogPhi, std::log(1 + std::sqrt(2.0)), 2 * kLogPhi};
}

struct AsymptoticsRow {
    double lambda = 0.0;
    int k_max = 0;
    std::vector<double> products;  // gamma, dim_nu, dim_sigma, alpha times log lambda
};

struct AsymptoticsAudit {
    std::vector<AsymptoticsRow> rows;
    std::vector<double> targets;
    std::vector<bool> within_tolerance;  // last row, per quantity
    std::vector<bool> monotone;          // |product - target| nonincreasing along the grid
    double tolerance = 0.15;
    bool pass() const {
        for (std::size_t i = 0; i < within_tolerance.size(); ++i)
            if (!within_tolerance[i] || !monotone[i]) return false;
        return !within_tolerance.empty();
    }
};

inline AsymptoticsAudit asymptotics_audit(const std::vector<SpectralReport>& reports, double tolerance = 0.15) {
    AsymptoticsAudit a;
    a.targets = asymptotic_constants();
    a.tolerance = tolerance;
    for (const auto& r : reports) {
        const double l = std::log(r.lambda);
        a.rows.push_back({r.lambda, r.k_max,
                          {r.gamma.value * l, r.dim_nu.value * l, r.dim_sigma.value * l, r.alpha.value * l}});
    }
    if (a.rows.empty()) return a;
    for (int q = 0; q < 4; ++q) {
        const double t = a.targets[q];
        bool within = true, mono = true;
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            within = within && std::fabs(a.rows[i].products[q] - t) <= tolerance * t;
            if (i > 0)
                mono = mono && std::fabs(a.rows[i].products[q] - t) <= std::fabs(a.rows[i - 1].products[q] - t);
        }
        a.within_tolerance.push_back(within);
        a.monotone.push_back(mono);
    }
    return a;
}

inline void write_asymptotics_csv(std::ostream& os, const AsymptoticsAudit& a) {
    os << "# targets: gamma=" << fmt17(a.targets[0]) << " dim_nu=" << fmt17(a.targets[1])
       << " dim_sigma=" << fmt17(a.targets[2]) << " alpha=" << fmt17(a.targets[3]) << '\n';
    os << "lambda,k_max,gamma_loglambda,dimnu_loglambda,dimsigma_loglambda,alpha_loglambda\n";
    for (const auto& r : a.rows) {
        os << fmt17(r.lambda) << ',' << r.k_max;
        for (double p : r.products) os << ',' << fmt17(p);
        os << '\n';
    }
}

}  // namespace fibham
