#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "fibham/operator_lab.hpp"
#include "fibham/spectral_report.hpp"

using namespace fibham;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Fibonacci words by concatenation: s_0 = a, s_1 = ab, s_k = s_{k-1} s_{k-2}.
std::string fibonacci_word(int k) {
    std::string p = "a", q = "ab";
    if (k == 0) return p;
    for (int i = 2; i <= k; ++i) {
        std::string r = q + p;
        p = q;
        q = r;
    }
    return q;
}

Eigen::MatrixXd dense_hamiltonian(const PotentialSpec& p) {
    const int n = p.length;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        h(i, i) = p.values[i];
        if (i + 1 < n) h(i, i + 1) = h(i + 1, i) = 1.0;
    }
    return h;
}

// Exact exponential time average from eigenpairs:
// (2/T) int e^{-2t/T} cos(w t) dt = 1 / (1 + (w T / 2)^2).
std::vector<double> exact_moments(const PotentialSpec& p, double power, const std::vector<double>& T) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_hamiltonian(p));
    const Eigen::VectorXd& e = es.eigenvalues();
    const Eigen::MatrixXd& v = es.eigenvectors();
    const int n = p.length, c = (n + 1) / 2 - 1;
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d[i] = std::pow(std::abs(i - c), power);
    const Eigen::MatrixXd m = v.transpose() * d.asDiagonal() * v;
    std::vector<double> out;
    for (double t : T) {
        double s = 0;
        for (int j = 0; j < n; ++j)
            for (int l = 0; l < n; ++l) {
                const double w = (e[j] - e[l]) * t / 2;
                s += v(c, j) * v(c, l) * m(j, l) / (1 + w * w);
            }
        out.push_back(s);
    }
    return out;
}

std::vector<double> geometric(double a, double b, int n) {
    std::vector<double> t;
    for (int i = 0; i < n; ++i) t.push_back(a * std::pow(b / a, i / (n - 1.0)));
    return t;
}

}  // namespace

TEST_CASE("potential values and the substitution word", "[operator_lab]") {
    const PotentialSpec p = generate_potential(1.0, 0.0, 5);
    const std::vector<double> expect{1, 0, 1, 1, 0};
    CHECK(p.values == expect);
    CHECK(p.substitution_checked);
    CHECK_FALSE(generate_potential(1.0, 0.0, 6).substitution_checked);

    const PotentialSpec q = generate_potential(1.0, 0.0, 13);
    CHECK(q.substitution_checked);
    const std::string w = fibonacci_word(5);
    REQUIRE(w.size() == 13);
    for (int n = 0; n < 13; ++n) CHECK(q.values[n] == (w[n] == 'a' ? 1.0 : 0.0));

    for (int k = 0; k <= 15; ++k) {
        const std::string s = fibonacci_word(k);
        const auto sub = substitution_word(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(sub[i] == (s[i] == 'a' ? 1 : 0));
        CHECK(generate_potential(3.0, 0.0, static_cast<int>(s.size())).substitution_checked);
    }
    CHECK(is_fibonacci_length(987));
    CHECK_FALSE(is_fibonacci_length(1000));
    CHECK_THROWS_AS(generate_potential(1.0, 0.0, 0), DomainError);
}

TEST_CASE("the word has no short period", "[operator_lab]") {
    const PotentialSpec p = generate_potential(1.0, 0.0, 1000);
    for (int per = 1; per <= 500; ++per) {
        bool periodic = true;
        for (int n = 0; n + per < 1000 && periodic; ++n) periodic = p.values[n] == p.values[n + per];
        CHECK_FALSE(periodic);
    }
    double ones = 0;
    for (double v : p.values) ones += v;
    CHECK_THAT(ones / 1000, WithinAbs(kAlpha, 2e-3));
}

TEST_CASE("Sturm counts match a dense eigensolver", "[operator_lab]") {
    std::mt19937_64 g(9);
    std::uniform_real_distribution<double> u(0, 1);
    for (int L : {17, 100, 333, 512}) {
        const double lam = 4 * u(g);
        const PotentialSpec p = generate_potential(lam, u(g), L);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_hamiltonian(p), Eigen::EigenvaluesOnly);
        const Eigen::VectorXd& ev = es.eigenvalues();
        long long prev = -1;
        for (int i = 0; i < 50; ++i) {
            const double e = -2.5 + (5 + lam) * i / 49.0;
            long long dense = 0;
            for (int j = 0; j < L; ++j) dense += ev[j] <= e;
            const IdsValue v = ids_finite(p, e);
            CHECK(v.count == dense);
            CHECK(v.count >= prev);
            prev = v.count;
        }
        CHECK(ids_finite(p, -2.0 - 1e-9).count == 0);
        CHECK(ids_finite(p, 2.0 + lam + 1e-9).count == L);
    }
}

TEST_CASE("an energy at an eigenvalue is shifted and flagged", "[operator_lab]") {
    // Free 1-site block: eigenvalue 0 exactly.
    PotentialSpec p;
    p.length = 1;
    p.values = {0.0};
    const IdsValue v = ids_finite(p, 0.0);
    CHECK(v.perturbed);
    CHECK(v.count == 1);
}

TEST_CASE("IDS is flat across gaps of the covering spectra", "[operator_lab]") {
    const int k = 10;
    const BandHierarchy h = compute_bands(2.0, k + 1);
    std::vector<std::pair<double, double>> cover;
    for (int q : {k, k + 1})
        for (const Band& b : h.level(q)) cover.emplace_back(b.left(), b.right());
    std::sort(cover.begin(), cover.end());
    std::vector<std::pair<double, double>> gaps;
    double reach = cover.front().second;
    for (const auto& [a, b] : cover) {
        if (a > reach) gaps.emplace_back(reach, a);
        reach = std::max(reach, b);
    }
    REQUIRE(gaps.size() > 50);
    const PotentialSpec p = generate_potential(2.0, 0.0, 2000);
    long long worst = 0;
    for (const auto& [a, b] : gaps) {
        long long lo = 1LL << 40, hi = -1;
        for (int i = 1; i <= 5; ++i) {
            const long long c = ids_finite(p, a + (b - a) * i / 6.0).count;
            lo = std::min(lo, c);
            hi = std::max(hi, c);
        }
        worst = std::max(worst, hi - lo);
    }
    // Dirichlet truncation adds at most one boundary state per end inside a gap.
    CHECK(worst <= 2);
}

TEST_CASE("gap labels at level 16", "[operator_lab]") {
    const BandHierarchy h = compute_bands(2.0, 16);
    const GapLabeling g = gap_labels(h, 16, 20);
    CHECK(g.missed.empty());
    CHECK(g.covered.size() == 40);
    REQUIRE(g.gaps.size() == 1596);
    const double f = 1597;
    const GapRecord* widest = &g.gaps.front();
    for (const GapRecord& r : g.gaps) {
        CHECK(r.label_error < 2 / f);
        CHECK(r.right > r.left);
        CHECK(r.ids_den == 1597);
        if (r.right - r.left > widest->right - widest->left) widest = &r;
    }
    CHECK(std::abs(widest->label_m) == 1);

    // IDS from Sturm counting at the gap midpoints.
    const PotentialSpec p = generate_potential(2.0, 0.0, 2000);
    double worst = 0;
    for (const GapRecord& r : g.gaps) worst = std::max(worst, std::fabs(ids_finite(p, r.midpoint()).value - r.ids_value()));
    CHECK(worst < 0.01);

    std::ostringstream os;
    write_gaps_csv(os, g);
    CHECK(os.str().rfind("level,j,left,right,m,label_error\n16,1,", 0) == 0);
}

TEST_CASE("label errors shrink like 1/F_k", "[operator_lab]") {
    const BandHierarchy h = compute_bands(2.0, 16);
    auto worst = [&](int k) {
        double w = 0;
        for (const GapRecord& r : gap_labels_from(h, k, 3).gaps) w = std::max(w, r.label_error);
        return w;
    };
    const double e12 = worst(12), e16 = worst(16);
    CHECK(e16 < 0.5 * e12);
    CHECK(e16 * 1597 < 2);
    CHECK(e12 * 233 < 2);
}

TEST_CASE("coverage failure when the level is too coarse", "[operator_lab]") {
    const BandHierarchy h = compute_bands(2.0, 5);
    CHECK_THROWS_AS(gap_labels(h, 5, 20), CoverageFailure);
    CHECK_FALSE(gap_labels_from(h, 5, 20).missed.empty());
}

TEST_CASE("DOS scaling probe", "[operator_lab]") {
    const BandHierarchy h = compute_bands(2.0, 16);
    const DosProbe p = dos_scaling_probe(h, 16, 6);
    int bands = 0;
    double total = 0;
    for (const auto& e : p.entries)
        if (e.is_band) {
            ++bands;
            CHECK(e.measure == 1.0 / 1597);
            total += e.measure;
        }
    CHECK(bands == 1597);
    CHECK_THAT(total, WithinAbs(1.0, 1e-12));
    const SpectralReport r = full_report(h);
    CHECK(p.band_min >= r.gamma.value - 0.05);
    CHECK(std::fabs(p.band_mean - r.dim_nu.value) < 0.05);
    CHECK(p.dyadic_min > 0);
    CHECK_THROWS_AS(dos_scaling_probe(h, 17, 3), DomainError);
}

TEST_CASE("time-average quadrature on smooth integrands", "[operator_lab]") {
    std::vector<double> t, wt;
    detail::geometric_nodes(1e-4 * 64, 16 * 256, 512, t, wt);
    for (double T : {64.0, 100.0, 256.0}) {
        for (int n : {0, 1, 2, 3, 5}) {
            std::vector<double> f;
            for (double s : t) f.push_back(std::pow(s, n));
            CHECK_THAT(exp_time_average(t, wt, f, T, 16), WithinRel(std::tgamma(n + 1) * std::pow(T / 2, n), 1e-6));
        }
        std::vector<double> f;
        for (double s : t) f.push_back(2 + std::cos(0.05 * s));
        const double a = 2 / T;
        CHECK_THAT(exp_time_average(t, wt, f, T, 16), WithinRel(2 + a * a / (a * a + 0.0025), 1e-6));
    }
}

TEST_CASE("transport moments against the exact spectral average", "[operator_lab]") {
    const std::vector<double> T = geometric(16, 64, 5);
    const PotentialSpec p = generate_potential(8.0, 0.0, 256);
    const auto exact = exact_moments(p, 2.0, T);
    TransportOptions fine;
    fine.nodes = 4096;
    const TransportResult a = transport_moments(8.0, 0.0, 256, 2.0, T, fine);
    const TransportResult b = transport_moments(8.0, 0.0, 256, 2.0, T);
    for (std::size_t i = 0; i < T.size(); ++i) {
        CHECK_THAT(a.rows[i].moment, WithinRel(exact[i], 1e-3));
        CHECK_THAT(b.rows[i].moment, WithinRel(exact[i], 3e-2));
        CHECK(b.rows[i].moment > 0);
    }
    CHECK(a.max_unitarity_error < 1e-9);
    CHECK(b.max_unitarity_error < 1e-9);
}

TEST_CASE("free motion is ballistic", "[operator_lab]") {
    const auto r = transport_moments_multi(0.0, 0.0, 1024, {1.0, 2.0}, geometric(4, 12, 6));
    for (const auto& x : r) {
        CHECK(std::fabs(x.beta_fit - 1) < 0.05);
        CHECK(x.max_unitarity_error < 1e-9);
        CHECK(x.max_outside < 1e-8);
    }
    // Second moment of free motion grows like 2 t^2 with the time average giving T^2.
    CHECK_THAT(r[1].rows.back().moment / (12.0 * 12.0), WithinAbs(1.0, 0.1));
}

TEST_CASE("quasiperiodic transport is anomalous", "[operator_lab]") {
    const auto r = transport_moments_multi(8.0, 0.0, 1024, {1.0, 2.0, 5.0}, geometric(64, 256, 10));
    double prev = 0;
    for (const auto& x : r) {
        CHECK(x.beta_fit > 0);
        CHECK(x.beta_fit < 1);
        CHECK(x.beta_fit >= prev);
        prev = x.beta_fit;
        CHECK(x.max_unitarity_error < 1e-9);
        for (std::size_t i = 1; i < x.rows.size(); ++i) CHECK(x.rows[i].moment > x.rows[i - 1].moment);
    }
}

TEST_CASE("transport guards", "[operator_lab]") {
    CHECK_THROWS_AS(transport_moments(0.0, 0.0, 256, 2.0, {64.0}), BoundaryContamination);
    CHECK_THROWS_AS(transport_moments(1.0, 0.0, 256, 2.0, {65.0}), DomainError);
    CHECK_THROWS_AS(transport_moments(1.0, 0.0, 4, 2.0, {1.0}), DomainError);
    CHECK_THROWS_AS(transport_moments(1.0, 0.0, 256, 2.0, {}), DomainError);
    CHECK_THROWS_AS(transport_moments(1.0, 0.0, 256, 2.0, {-1.0}), DomainError);
    std::ostringstream os;
    write_transport_csv(os, transport_moments(8.0, 0.0, 256, 1.0, {4.0, 8.0}));
    CHECK(os.str().rfind("T,moment,beta\n", 0) == 0);
}

TEST_CASE("time-averaged moments are smooth in T", "[operator_lab]") {
    // Moments at T - d, T, T + d: the midpoint must match the chord to second order.
    const double d = 1e-3;
    std::vector<double> T;
    for (double t : {20.0, 33.0, 50.0}) T.insert(T.end(), {t - d, t, t + d});
    const auto r = transport_moments(8.0, 0.0, 256, 2.0, T);
    for (std::size_t i = 0; i < T.size(); i += 3) {
        const double chord = 0.5 * (r.rows[i].moment + r.rows[i + 2].moment);
        CHECK(std::fabs(r.rows[i + 1].moment - chord) < 1e-6 * r.rows[i + 1].moment);
    }
}
