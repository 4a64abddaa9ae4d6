#include <catch_amalgamated.hpp>

#include <boost/multiprecision/cpp_int.hpp>
#include <map>
#include <sstream>

#include "fibham/band_combinatorics.hpp"
#include "fibham/band_engine.hpp"

using namespace fibham;
using boost::multiprecision::cpp_rational;

namespace {

// Closed form evaluated as an exact rational, independently of the library helper.
cpp_rational closed_form_rational(int k, int m) {
    bigint binom = 1;
    const int n = k - m, r = 2 * m - k;
    for (int i = 0; i < r; ++i) binom = binom * (n - i);
    for (int i = 2; i <= r; ++i) binom /= i;
    cpp_rational v(binom * m, k - m);
    const int e = 2 * k - 3 * m - 1;
    for (int i = 0; i < std::abs(e); ++i) {
        if (e > 0) v *= 2; else v /= 2;
    }
    return v;
}

}  // namespace

TEST_CASE("initial values", "[band_combinatorics]") {
    const CombTable t = build_comb_table(5);
    CHECK(t.a[0].at(0) == 1);
    CHECK(t.b[1].at(0) == 1);
    for (int m = -2; m <= 5; ++m) CHECK(t.a[1].at(m) == 0);
    CHECK(t.b[0].sum() == 0);
    CHECK_THROWS_AS(build_comb_table(1), DomainError);
}

TEST_CASE("recursion agrees with the closed form up to k = 60", "[band_combinatorics]") {
    const CombTable t = build_comb_table(60);
    for (int k = 1; k <= 60; ++k) {
        const SparseRow& row = t.a[k];
        for (int m = 0; m <= k; ++m) {
            const bool in_support = 2 * m >= k && 3 * m <= 2 * k;
            if (!in_support) {
                CHECK(row.at(m) == 0);
                continue;
            }
            const cpp_rational c = closed_form_rational(k, m);
            REQUIRE(denominator(c) == 1);
            CHECK(row.at(m) == numerator(c));
            CHECK(closed_form_a(k, m) == row.at(m));
        }
    }
}

TEST_CASE("level totals and aggregates", "[band_combinatorics]") {
    const CombTable t = build_comb_table(60);
    for (int k = 2; k <= 60; ++k) {
        CHECK(t.a_k(k) == t.fib[k - 2]);
        CHECK(t.b_k(k) == t.fib[k - 1]);
        CHECK(t.fib[k] == t.fib[k - 1] + t.fib[k - 2]);
        CHECK(t.C[k] == t.A[k] + t.B[k]);
        // Raw moment sums against the aggregate recursions.
        CHECK(t.a[k].first_moment() == t.b[k - 1].first_moment() + t.fib[k - 2]);
        if (k >= 3) CHECK(t.C[k] == t.C[k - 1] + t.C[k - 2] + 2 * t.fib[k - 2]);
        for (const auto& x : t.a[k].v) CHECK(x >= 0);
        for (const auto& x : t.b[k].v) CHECK(x >= 0);
    }
    CHECK_FALSE(check_aggregate_recursions(t).has_value());
    CHECK(t.fib[60] == bigint(static_cast<unsigned long long>(fib(60))));
}

TEST_CASE("m histogram of computed bands matches the table", "[band_combinatorics]") {
    const CombTable t = build_comb_table(12);
    const BandHierarchy h = classify_bands(compute_bands(8.0, 12));
    for (int k = 2; k <= 12; ++k) {
        std::map<int, int> na, nb;
        for (const Band& b : h.level(k)) (b.type == BandType::A ? na : nb)[b.m_count]++;
        for (int m = 0; m <= k; ++m) {
            CHECK(bigint(na[m]) == t.a[k].at(m));
            CHECK(bigint(nb[m]) == t.b[k].at(m));
        }
    }
}

TEST_CASE("limit of C_k / (k F_k)", "[band_combinatorics]") {
    CHECK_THAT(comb_limit_target(), Catch::Matchers::WithinAbs(0.5527864045, 1e-10));
    const CombLimit l = comb_limit(build_comb_table(60));
    CHECK(std::fabs(l.ratio_at_kmax - comb_limit_target()) < 0.02);
    CHECK(std::fabs(l.extrapolated - comb_limit_target()) < 1e-3);
    CHECK_THROWS_AS(comb_limit(build_comb_table(19)), DomainError);

    // R_k / F_k stays bounded.
    const auto r = residual_over_fib(build_comb_table(60));
    double early = 0, late = 0;
    for (int k = 10; k <= 30; ++k) early = std::max(early, std::fabs(r[k]));
    for (int k = 31; k <= 60; ++k) late = std::max(late, std::fabs(r[k]));
    CHECK(late <= early + 1e-9);
}

TEST_CASE("comb CSV", "[band_combinatorics]") {
    std::ostringstream os;
    write_comb_csv(os, build_comb_table(4));
    CHECK(os.str().rfind("k,F_k,a_k,b_k,A_k,B_k,C_k,C_k_over_kF_k\n0,1,1,0,0,0,0,nan\n", 0) == 0);
}
