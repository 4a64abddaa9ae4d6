#include <catch_amalgamated.hpp>

#include <sstream>

#include "fibham/band_engine.hpp"

using namespace fibham;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Real roots of a monic cubic from its companion matrix.
std::vector<double> cubic_roots(double c2, double c1, double c0) {
    Eigen::Matrix3d m;
    m << -c2, -c1, -c0, 1, 0, 0, 0, 1, 0;
    Eigen::EigenSolver<Eigen::Matrix3d> es(m);
    std::vector<double> r;
    for (int i = 0; i < 3; ++i)
        if (std::fabs(es.eigenvalues()[i].imag()) < 1e-12) r.push_back(es.eigenvalues()[i].real());
    std::sort(r.begin(), r.end());
    return r;
}

}  // namespace

TEST_CASE("levels 0 and 1 by hand", "[band_engine]") {
    const BandHierarchy h = compute_bands(2.0, 1);
    REQUIRE(h.level(0).size() == 1);
    CHECK_THAT(h.level(0)[0].left(), WithinAbs(-2, 1e-14));
    CHECK_THAT(h.level(0)[0].right(), WithinAbs(2, 1e-14));
    CHECK(h.level(0)[0].center() == 0.0);
    REQUIRE(h.level(1).size() == 1);
    CHECK_THAT(h.level(1)[0].left(), WithinAbs(0, 1e-14));
    CHECK_THAT(h.level(1)[0].right(), WithinAbs(4, 1e-14));
    CHECK(h.level(1)[0].center() == 2.0);
    CHECK(h.delta_cap() == 1.0);
}

TEST_CASE("level 3 roots match the expanded cubic", "[band_engine]") {
    // At lambda = 2: 2 x_3 = E^3 - 4E^2 + E + 4.
    const auto expect = cubic_roots(-4, 1, 4);
    REQUIRE(expect.size() == 3);
    const BandHierarchy h = compute_bands(2.0, 3);
    REQUIRE(h.level(3).size() == 3);
    for (int i = 0; i < 3; ++i) CHECK_THAT(h.level(3)[i].center(), WithinAbs(expect[i], 1e-9));
    const auto ev = twisted_eigen_roots(2.0, 3);
    for (int i = 0; i < 3; ++i) CHECK_THAT(ev[i], WithinAbs(expect[i], 1e-9));
}

TEST_CASE("band counts, ordering and edges", "[band_engine]") {
    for (double lam : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
        const BandHierarchy h = compute_bands(lam, 14);
        const wide wl = wide(lam);
        for (int k = 0; k <= 14; ++k) {
            const auto& lv = h.level(k);
            REQUIRE(lv.size() == fib(k));
            for (std::size_t i = 0; i < lv.size(); ++i) {
                const Band& b = lv[i];
                CHECK(b.index == static_cast<int>(i) + 1);
                CHECK((b.lo < b.root && b.root < b.hi));
                if (i > 0) CHECK(lv[i - 1].hi < b.lo);
                if (k < 2) continue;
                const double xl = to_double(trace_value(wl, b.lo, k));
                const double xr = to_double(trace_value(wl, b.hi, k));
                CHECK(std::fabs(std::fabs(xl) - 1) < 1e-9);
                CHECK(std::fabs(std::fabs(xr) - 1) < 1e-9);
                CHECK(xl * xr < 0);
                CHECK(std::fabs(to_double(trace_value(wl, b.root, k))) < 1e-11);
            }
        }
    }
}

TEST_CASE("roots agree with the twisted periodic approximant", "[band_engine]") {
    for (double lam : {0.5, 2.0, 8.0}) {
        const BandHierarchy h = compute_bands(lam, 12);
        for (int k = 0; k <= 12; ++k) {
            const auto ev = twisted_eigen_roots(lam, k);
            REQUIRE(ev.size() == h.level(k).size());
            double worst = 0;
            for (std::size_t i = 0; i < ev.size(); ++i)
                worst = std::max(worst, std::fabs(ev[i] - h.level(k)[i].center()));
            CHECK(worst < 1e-7);
        }
    }
    CHECK_THROWS_AS(twisted_eigen_roots(2.0, kTwistedEigenCap + 1), DimensionTooLarge);
}

TEST_CASE("typing follows the containment lemma", "[band_engine]") {
    const BandHierarchy h = classify_bands(compute_bands(8.0, 12));
    CHECK(h.typed());
    CHECK(h.level(0)[0].type == BandType::A);
    CHECK(h.level(1)[0].type == BandType::B);
    int a = 0, b = 0;
    for (const Band& x : h.level(10)) (x.type == BandType::A ? a : b)++;
    CHECK(a == 34);
    CHECK(b == 55);
    for (int k = 2; k <= 12; ++k)
        for (const Band& x : h.level(k)) {
            REQUIRE(x.parent.has_value());
            const Band& p = h.level(x.parent->level)[x.parent->index - 1];
            CHECK(p.lo <= x.lo);
            CHECK(x.hi <= p.hi);
            CHECK(x.parent->level == (x.type == BandType::A ? k - 1 : k - 2));
        }
    CHECK_THROWS_AS(classify_bands(compute_bands(4.0, 6)), NotApplicable);
    CHECK_THROWS_AS(classify_bands(compute_bands(8.0, 1)), DomainError);
}

TEST_CASE("no energy lies in three consecutive level spectra", "[band_engine]") {
    const BandHierarchy h = compute_bands(8.0, 14);
    const int n = 200000;
    for (int k = 0; k <= 12; ++k) {
        int hits = 0;
        for (int i = 0; i <= n; ++i) {
            const wide e = wide(-2.0 + 12.0 * i / n);
            if (detail::containing(h.level(k), e) && detail::containing(h.level(k + 1), e) &&
                detail::containing(h.level(k + 2), e))
                ++hits;
        }
        CHECK(hits == 0);
    }
}

TEST_CASE("zero-coupling derivative at the roots", "[band_engine]") {
    for (int k : {3, 7, 12}) {
        const double f = static_cast<double>(fib(k));
        for (int j = 0; j < 5; ++j) {
            const double theta = (0.25 + 0.5 * j) / f;
            if (theta >= 0.5) break;
            const double e = 2 * std::cos(2 * kPi * theta);
            const auto ev = trace_eval<double>(0.0, e, k);
            CHECK(std::fabs(ev.x) < 1e-9);
            CHECK_THAT(std::fabs(ev.dx), WithinRel(f / (2 * std::fabs(std::sin(2 * kPi * theta))), 1e-8));
        }
    }
}

TEST_CASE("root derivatives", "[band_engine]") {
    const BandHierarchy h = compute_bands(2.0, 8);
    const RootDerivatives rd = root_derivatives(h, 8);
    REQUIRE(rd.items.size() == 34);
    double sum = 0;
    for (const auto& [root, d] : rd.items) {
        CHECK_FALSE(d.is_zero());
        const double e = to_double(root), step = 1e-7;
        const double fd =
            (trace_value<double>(2.0, e + step, 8) - trace_value<double>(2.0, e - step, 8)) / (2 * step);
        CHECK_THAT(d.value(), WithinRel(fd, 1e-5));
        sum += d.log_mag;
        CHECK(d.log_mag >= rd.min_log);
        CHECK(d.log_mag <= rd.max_log);
    }
    CHECK_THAT(rd.sum_log, WithinAbs(sum, 1e-12));
    // Derivative signs alternate with the band index.
    for (std::size_t i = 1; i < rd.items.size(); ++i) CHECK(rd.items[i].second.sign == -rd.items[i - 1].second.sign);
    CHECK_THROWS_AS(root_derivatives(h, 9), DomainError);
}

TEST_CASE("m_count recounted from the trace sequence", "[band_engine]") {
    const BandHierarchy h = compute_bands(8.0, 10);
    for (int k = 1; k <= 10; ++k)
        for (const Band& b : h.level(k)) {
            const TraceSequence s = trace_sequence(8.0, b.center(), k, false);
            int m = 0;
            for (int j = 0; j <= k - 1; ++j) m += std::fabs(s.x(j)) <= 1;
            CHECK(b.m_count == m);
        }
}

TEST_CASE("sandwich constants and audit", "[band_engine]") {
    const SandwichConstants c = sandwich_constants(8.0);
    CHECK_THAT(c.lower, WithinAbs(3.0, 1e-14));
    CHECK(c.upper == 38.0);
    CHECK_THROWS_AS(sandwich_constants(6.0), DomainError);
    // The lower bound is not attained at the first few levels; the audit is run from level 6.
    for (double lam : {8.0, 16.0, 24.0}) {
        const BandHierarchy h = compute_bands(lam, 14);
        CHECK(sandwich_audit(h, 6, 14).empty());
    }
}

TEST_CASE("x_k changes sign once across each band", "[band_engine]") {
    for (double lam : {1.0, 2.0, 8.0}) {
        const BandHierarchy h = compute_bands(lam, 12);
        for (int k = 1; k <= 12; ++k) CHECK(sign_probe_failures(h, k).empty());
    }
}

TEST_CASE("Koebe radius bounds", "[band_engine]") {
    const KoebeBounds one = koebe_radius_bounds(1.0, LogScalar::from(1.0));
    CHECK_THAT(one.lower_inv_R.value(), WithinAbs(1.0 / 36, 1e-15));
    CHECK_THAT(one.upper_inv_r.value(), WithinAbs(25.0 / 18, 1e-15));
    const KoebeBounds tiny = koebe_radius_bounds(1e-9, LogScalar::from(3.0));
    CHECK(tiny.lower_inv_R.value() < 1e-16);
    CHECK_THAT(tiny.upper_inv_r.value(), WithinAbs(12.0, 1e-7));
    for (double d : {0.01, 0.3, 2.0, 7.9})
        CHECK(koebe_radius_bounds(d, LogScalar::from(5.0)).lower_inv_R <
              koebe_radius_bounds(d, LogScalar::from(5.0)).upper_inv_r);
    CHECK_THROWS_AS(koebe_radius_bounds(0.0, LogScalar::from(1.0)), DomainError);
    CHECK_THROWS_AS(koebe_radius_bounds(0.6, LogScalar::from(1.0), 2.0), DomainError);
}

TEST_CASE("bad arguments", "[band_engine]") {
    CHECK_THROWS_AS(compute_bands(0.0, 4), DomainError);
    CHECK_THROWS_AS(compute_bands(2.0, -1), DomainError);
}

TEST_CASE("precision ceiling at very large coupling", "[band_engine]") {
    CHECK_THROWS_AS(compute_bands(512.0, 19), PrecisionExhausted);
    BandOptions opt;
    opt.stop_at_precision_limit = true;
    const BandHierarchy h = compute_bands(512.0, 19, opt);
    CHECK(h.precision_limit == h.k_max() + 1);
    CHECK(h.k_max() >= 15);
    for (int k = 0; k <= h.k_max(); ++k) CHECK(h.level(k).size() == fib(k));
}

TEST_CASE("band output is deterministic", "[band_engine]") {
    std::ostringstream a, b;
    write_bands_csv(a, classify_bands(compute_bands(8.0, 9)));
    write_bands_csv(b, classify_bands(compute_bands(8.0, 9)));
    CHECK(a.str() == b.str());
    std::istringstream in(a.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "level,index,left,right,root,log_deriv,type,m_count");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 143);  // F_0 + ... + F_9 = F_11 - 1
}
