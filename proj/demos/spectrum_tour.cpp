// Walk through the pipeline at one coupling: bands, typing, estimators, labels.
#include <cstdio>
#include <cstdlib>

#include "fibham/band_combinatorics.hpp"
#include "fibham/band_engine.hpp"
#include "fibham/operator_lab.hpp"
#include "fibham/orbit_library.hpp"
#include "fibham/spectral_report.hpp"

int main(int argc, char** argv) {
    using namespace fibham;
    const double lambda = argc > 1 ? std::atof(argv[1]) : 8.0;
    const int k = argc > 2 ? std::atoi(argv[2]) : 14;

    BandHierarchy h = compute_bands(lambda, k);
    if (lambda > 4) h = classify_bands(h);
    std::printf("lambda = %g, levels 0..%d\n", lambda, h.k_max());
    for (int q = 0; q <= std::min(k, 6); ++q) {
        std::printf("  level %d:", q);
        for (const Band& b : h.level(q)) std::printf(" [%.4f, %.4f]%s", b.left(), b.right(), to_string(b.type));
        std::printf("\n");
    }

    const auto rd = root_derivatives(h, k);
    std::printf("log|x_k'| at level %d: min %.4f  mean %.4f  max %.4f\n", k, rd.min_log,
                rd.sum_log / static_cast<double>(rd.items.size()), rd.max_log);

    const SpectralReport r = full_report(h);
    std::printf("gamma %.4f  dim_nu %.4f  dim_sigma %.4f  alpha %.4f  chain %s\n", r.gamma.value, r.dim_nu.value,
                r.dim_sigma.value, r.alpha.value, to_string(r.chain));
    std::printf("orbit curves: %.4f %.4f, period-2 Hoelder value %.4f\n", r.orbit_bounds.bound_p6label,
                r.orbit_bounds.bound_p4label, r.orbit_bounds.gamma_closed_form);

    const GapLabeling g = gap_labels_from(h, k, 5);
    std::printf("gap labels |m| <= 5 covered: %zu of 10\n", g.covered.size());

    const CombTable t = build_comb_table(40);
    std::printf("C_40 / (40 F_40) = %.6f (limit %.6f)\n", t.ratio(40), comb_limit_target());
    return 0;
}
