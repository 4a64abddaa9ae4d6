#include "fibham/cli_app.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include "fibham/band_combinatorics.hpp"
#include "fibham/band_engine.hpp"
#include "fibham/errors.hpp"
#include "fibham/operator_lab.hpp"
#include "fibham/orbit_library.hpp"
#include "fibham/spectral_report.hpp"
#include "fibham/thermo.hpp"

namespace fibham::cli {

using json = nlohmann::ordered_json;

std::vector<double> parse_grid(const std::string& spec) {
    if (spec.empty()) throw ConfigError("empty grid; use start:stop:step or a comma list");
    auto number = [&](const std::string& s) {
        std::size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != s.size() || s.empty()) throw ConfigError("cannot parse number '" + s + "' in grid '" + spec + "'");
        return v;
    };
    std::vector<double> out;
    if (spec.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(spec);
        for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
        if (parts.size() != 3) throw ConfigError("grid '" + spec + "' must have the form start:stop:step");
        const double a = number(parts[0]), b = number(parts[1]), h = number(parts[2]);
        if (!(h > 0)) throw ConfigError("grid '" + spec + "': step must be positive");
        if (b < a) throw ConfigError("grid '" + spec + "': stop must not be below start");
        const double n = (b - a) / h;
        const long long count = static_cast<long long>(std::floor(n + 1e-12 * std::max(1.0, std::fabs(n)))) + 1;
        if (count > 10'000'000) throw ConfigError("grid '" + spec + "' has more than 1e7 points");
        for (long long i = 0; i < count; ++i) out.push_back(a + static_cast<double>(i) * h);
        // Snap the last point onto stop when it is within rounding of it.
        if (std::fabs(out.back() - b) <= 1e-12 * std::max(1.0, std::fabs(b))) out.back() = b;
    } else {
        std::stringstream ss(spec);
        for (std::string p; std::getline(ss, p, ',');) out.push_back(number(p));
    }
    return out;
}

int thread_count() {
    const char* env = std::getenv("FIBHAM_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 256) throw ConfigError("FIBHAM_THREADS must be an integer in [1, 256]");
    return static_cast<int>(v);
}

namespace {

// Runs f(0..n-1) on the worker pool; results are kept in index order and the
// first failure by index is rethrown.
template <class R>
std::vector<R> parallel_map(std::size_t n, const std::function<R(std::size_t)>& f) {
    std::vector<R> out(n);
    std::vector<std::exception_ptr> errs(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                out[i] = f(i);
            } catch (...) {
                errs[i] = std::current_exception();
            }
        }
    };
    const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), std::max<std::size_t>(n, 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < nt; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
    return out;
}

json estimate_json(const SpectralEstimate& e) {
    json pl = json::array();
    for (const auto& [k, v] : e.per_level) pl.push_back({{"k", k}, {"estimate", v}});
    return {{"value", e.value},
            {"extrapolated", e.extrapolated},
            {"extrapolated_raw", e.extrapolated_raw},
            {"error_indicator", e.error_indicator},
            {"model_disagreement", e.model_disagreement},
            {"clamped", e.clamped},
            {"per_level", pl}};
}

json report_json(const SpectralReport& r) {
    return {{"lambda", r.lambda},
            {"k_max", r.k_max},
            {"k_min", r.k_min},
            {"precision_limit", r.precision_limit},
            {"gamma", estimate_json(r.gamma)},
            {"dim_nu", estimate_json(r.dim_nu)},
            {"dim_sigma", estimate_json(r.dim_sigma)},
            {"alpha", estimate_json(r.alpha)},
            {"orbit_bounds",
             {{"bound_p6label", r.orbit_bounds.bound_p6label},
              {"bound_p4label", r.orbit_bounds.bound_p4label},
              {"gamma_closed_form", r.orbit_bounds.gamma_closed_form}}},
            {"chain", to_string(r.chain)},
            {"chain_margins", r.chain_margins},
            {"per_level_order_ok", r.per_level_order_ok},
            {"bowen_between_ok", r.bowen_between_ok},
            {"box_dimension", r.box_dimension}};
}

struct Common {
    std::string format = "csv";
    std::string output;
    std::uint64_t seed = 1;
};

struct Outcome {
    json data_json;  // used when format == json
    int code = kExitOk;
};

std::vector<double> lambdas_from(const std::string& lambda, const std::string& grid) {
    if (!grid.empty() && !lambda.empty()) throw ConfigError("give either --lambda or --lambda-grid, not both");
    auto v = parse_grid(grid.empty() ? lambda : grid);
    std::sort(v.begin(), v.end());
    if (v.empty()) throw ConfigError("no coupling values given; use --lambda or --lambda-grid");
    return v;
}

void require_positive(const std::vector<double>& lambdas) {
    for (double l : lambdas)
        if (!(l > 0)) throw ConfigError("coupling values must be positive (got " + fmt17(l) + ")");
}

double uniform01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

std::vector<std::pair<std::string, std::string>> config_echo(const CLI::App& root, const CLI::App* sub) {
    std::vector<std::pair<std::string, std::string>> kv;
    for (const CLI::App* app : {&root, sub}) {
        for (const CLI::Option* o : app->get_options()) {
            const std::string name = o->get_single_name();
            if (name == "help" || name == "config" || name.empty()) continue;
            std::string v;
            if (o->count() > 0) {
                for (const auto& r : o->results()) v += (v.empty() ? "" : ",") + r;
            } else {
                v = o->get_default_str();
            }
            kv.emplace_back(name, v);
        }
    }
    return kv;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fibonacci Hamiltonian spectrum via trace-map dynamics", "fibham_cli"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML/INI file with the same keys as the flags (flags win)");
    Common common;
    app.add_option("--format", common.format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    app.add_option("--output,-o", common.output, "write data here instead of stdout");
    app.add_option("--seed", common.seed, "seed for randomized diagnostics")->capture_default_str();

    // bands
    double b_lambda = 2.0;
    int b_level = 8, b_from = 0;
    auto* bands = app.add_subcommand("bands", "band intervals, roots and root derivatives");
    bands->add_option("--lambda", b_lambda, "coupling")->capture_default_str();
    bands->add_option("--level", b_level, "highest level k")->capture_default_str()->check(CLI::Range(0, 60));
    bands->add_option("--from", b_from, "first level written")->capture_default_str()->check(CLI::Range(0, 60));

    // orbits
    std::string o_grid = "0.05:16:0.05";
    auto* orbits = app.add_subcommand("orbits", "closed-form bound curves and periodic-orbit exponents");
    orbits->add_option("--lambda-grid", o_grid, "couplings")->capture_default_str();

    // dims
    std::string d_lambda, d_grid;
    int d_kmax = 18;
    ReportOptions d_opt;
    auto* dims = app.add_subcommand("dims", "gamma, dim nu, dim sigma, alpha with the strict-chain audit");
    dims->add_option("--lambda", d_lambda, "coupling or comma list");
    dims->add_option("--lambda-grid", d_grid, "start:stop:step");
    dims->add_option("--kmax", d_kmax, "highest level")->capture_default_str()->check(CLI::Range(2, 40));
    dims->add_option("--kmin", d_opt.k_min, "first level used by the estimators")->capture_default_str();
    dims->add_option("--fit-levels", d_opt.fit_levels, "levels in the c + d/k fit")->capture_default_str();

    // pressure
    double p_lambda = 2.0;
    int p_level = 14;
    std::string p_t = "-1:2:0.01";
    auto* pressure = app.add_subcommand("pressure", "level-k pressure curve with annotated intercepts");
    pressure->add_option("--lambda", p_lambda, "coupling")->capture_default_str();
    pressure->add_option("--level", p_level, "level k")->capture_default_str()->check(CLI::Range(1, 40));
    pressure->add_option("--t", p_t, "t grid")->capture_default_str();

    // gaps
    double g_lambda = 2.0;
    int g_level = 16, g_mmax = 20;
    auto* gaps = app.add_subcommand("gaps", "gap labels with coverage check");
    gaps->add_option("--lambda", g_lambda, "coupling")->capture_default_str();
    gaps->add_option("--level", g_level, "level k")->capture_default_str()->check(CLI::Range(1, 30));
    gaps->add_option("--m-max", g_mmax, "labels |m| <= m-max must be covered")->capture_default_str();

    // comb
    int c_kmax = 60;
    auto* comb = app.add_subcommand("comb", "exact band combinatorics table");
    comb->add_option("--kmax", c_kmax, "highest level")->capture_default_str()->check(CLI::Range(2, 2000));

    // transport
    double t_lambda = 8.0, t_omega = 0.0;
    int t_length = 1024, t_random = 0;
    std::string t_p = "1,2,5", t_T;
    double t_contam = 1e-8;
    auto* transport = app.add_subcommand("transport", "time-averaged moments and transport exponents");
    transport->add_option("--lambda", t_lambda, "coupling (0 allowed: free case)")->capture_default_str();
    transport->add_option("--omega", t_omega, "phase in [0, 1)")->capture_default_str();
    transport->add_option("--length", t_length, "sample size L")->capture_default_str()->check(CLI::Range(8, 4096));
    transport->add_option("--p", t_p, "moment powers")->capture_default_str();
    transport->add_option("--T", t_T, "T grid (default: 10 geometric points on [L/16, L/4])");
    transport->add_option("--random-omegas", t_random, "extra runs at random phases drawn from --seed")
        ->capture_default_str()
        ->check(CLI::Range(0, 16));
    transport->add_option("--contamination-tol", t_contam, "outside-probability threshold")->capture_default_str();

    // sweep
    std::string s_lambdas = "32,128,512", s_report = "asymptotics";
    int s_kmax = 18;
    double s_tol = 0.15;
    auto* sweep = app.add_subcommand("sweep", "lambda sweep: asymptotics audit or dimension table");
    sweep->add_option("--lambdas", s_lambdas, "couplings (list or start:stop:step)")->capture_default_str();
    sweep->add_option("--report", s_report, "asymptotics or dims")
        ->check(CLI::IsMember({"asymptotics", "dims"}))
        ->capture_default_str();
    sweep->add_option("--kmax", s_kmax, "highest level requested")->capture_default_str()->check(CLI::Range(4, 40));
    sweep->add_option("--tolerance", s_tol, "relative tolerance of the asymptotics audit")->capture_default_str();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, er;
        const int code = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return code == 0 ? kExitOk : kExitError;
    }

    const auto t0 = std::chrono::steady_clock::now();
    const CLI::App* sub = app.get_subcommands().front();
    Outcome res;
    const bool as_json = common.format == "json";
    std::ostringstream csv;
    try {
        if (sub == bands) {
            if (!(b_lambda > 0)) throw ConfigError("--lambda must be positive");
            if (b_from > b_level) throw ConfigError("--from must not exceed --level");
            BandHierarchy h = compute_bands(b_lambda, b_level);
            if (b_lambda > 4 && b_level >= 2) h = classify_bands(h);
            write_bands_csv(csv, h, b_from, b_level);
            if (as_json) {
                json arr = json::array();
                for (int k = b_from; k <= b_level; ++k)
                    for (const Band& b : h.levels[k])
                        arr.push_back({{"level", b.level},
                                       {"index", b.index},
                                       {"left", b.left()},
                                       {"right", b.right()},
                                       {"root", b.center()},
                                       {"log_deriv", b.log_deriv()},
                                       {"type", to_string(b.type)},
                                       {"m_count", b.m_count}});
                res.data_json = {{"lambda", b_lambda}, {"bands", arr}};
            }
        } else if (sub == orbits) {
            const auto grid = parse_grid(o_grid);
            for (double l : grid)
                if (l < 0) throw ConfigError("--lambda-grid values must be >= 0");
            write_orbit_curves_csv(csv, grid);
            if (as_json) {
                json arr = json::array();
                for (double l : grid) {
                    const auto p2 = solve_period2(l);
                    const auto p4 = solve_period4(l);
                    arr.push_back({{"lambda", l},
                                   {"bound_p6label", bound_curve_p6label(l)},
                                   {"bound_p4label", bound_curve_p4label(l)},
                                   {"gamma_closed_form", gamma_closed_form(l)},
                                   {"gamma_period2", kLogPhi / p2.lyapunov_u},
                                   {"lyap_period2", p2.lyapunov_u},
                                   {"lyap_period4", p4.lyapunov_u}});
                }
                res.data_json = {{"orbits", arr}};
            }
        } else if (sub == dims) {
            const auto lambdas = lambdas_from(d_lambda, d_grid);
            require_positive(lambdas);
            if (d_opt.k_min < 1 || d_opt.k_min > d_kmax) throw ConfigError("--kmin must lie in [1, kmax]");
            if (d_opt.fit_levels < 2) throw ConfigError("--fit-levels must be >= 2");
            const auto reports = parallel_map<SpectralReport>(
                lambdas.size(), [&](std::size_t i) { return full_report(lambdas[i], d_kmax, d_opt); });
            csv << "lambda,k_max,gamma,dim_nu,dim_sigma,alpha,gamma_err,dim_nu_err,dim_sigma_err,alpha_err,"
                   "box_dimension,chain\n";
            json arr = json::array();
            for (const auto& r : reports) {
                csv << fmt17(r.lambda) << ',' << r.k_max << ',' << fmt17(r.gamma.value) << ',' << fmt17(r.dim_nu.value)
                    << ',' << fmt17(r.dim_sigma.value) << ',' << fmt17(r.alpha.value) << ','
                    << fmt17(r.gamma.error_indicator) << ',' << fmt17(r.dim_nu.error_indicator) << ','
                    << fmt17(r.dim_sigma.error_indicator) << ',' << fmt17(r.alpha.error_indicator) << ','
                    << fmt17(r.box_dimension) << ',' << to_string(r.chain) << '\n';
                if (r.chain != ChainStatus::strict) res.code = kExitInconclusive;
                arr.push_back(report_json(r));
            }
            res.data_json = {{"reports", arr}};
        } else if (sub == pressure) {
            if (!(p_lambda > 0)) throw ConfigError("--lambda must be positive");
            const auto tg = parse_grid(p_t);
            const PressureCurve c = pressure_curve(p_lambda, p_level, tg);
            write_pressure_csv(csv, c);
            if (as_json)
                res.data_json = {{"lambda", c.lambda},
                                 {"level", c.level},
                                 {"t", c.t_grid},
                                 {"P", c.values},
                                 {"intercepts",
                                  {{"gamma", c.gamma_intercept},
                                   {"dim_nu", c.tangent_intercept},
                                   {"dim_sigma", c.bowen_root},
                                   {"alpha", c.alpha_intercept}}},
                                 {"entropy_at_zero", c.entropy_at_zero}};
        } else if (sub == gaps) {
            if (!(g_lambda > 0)) throw ConfigError("--lambda must be positive");
            if (g_mmax < 1) throw ConfigError("--m-max must be >= 1");
            const GapLabeling g = gap_labels(g_lambda, g_level, g_mmax);
            write_gaps_csv(csv, g);
            if (as_json) {
                json arr = json::array();
                for (const auto& r : g.gaps)
                    arr.push_back({{"level", r.level},
                                   {"j", r.gap_index},
                                   {"left", r.left},
                                   {"right", r.right},
                                   {"m", r.label_m},
                                   {"label_error", r.label_error}});
                res.data_json = {{"gaps", arr}, {"covered", g.covered}};
            }
        } else if (sub == comb) {
            const CombTable t = build_comb_table(c_kmax);
            write_comb_csv(csv, t);
            if (as_json) {
                json arr = json::array();
                for (int k = 0; k <= t.k_max; ++k)
                    arr.push_back({{"k", k},
                                   {"F_k", t.fib[k].str()},
                                   {"a_k", t.a_k(k).str()},
                                   {"b_k", t.b_k(k).str()},
                                   {"A_k", t.A[k].str()},
                                   {"B_k", t.B[k].str()},
                                   {"C_k", t.C[k].str()}});
                json doc = {{"table", arr}};
                if (c_kmax >= 20) {
                    const auto lim = comb_limit(t);
                    doc["ratio_at_kmax"] = lim.ratio_at_kmax;
                    doc["extrapolated"] = lim.extrapolated;
                }
                res.data_json = doc;
            }
        } else if (sub == transport) {
            if (t_lambda < 0) throw ConfigError("--lambda must be >= 0");
            if (t_omega < 0 || t_omega >= 1) throw ConfigError("--omega must lie in [0, 1)");
            const auto powers = parse_grid(t_p);
            std::vector<double> Tg;
            if (t_T.empty()) {
                const double a = t_length / 16.0, b = t_length / 4.0;
                for (int i = 0; i < 10; ++i) Tg.push_back(a * std::pow(b / a, i / 9.0));
            } else {
                Tg = parse_grid(t_T);
            }
            std::vector<double> omegas{t_omega};
            std::mt19937_64 gen(common.seed);
            for (int i = 0; i < t_random; ++i) omegas.push_back(uniform01(gen));
            TransportOptions topt;
            topt.contamination_tol = t_contam;
            const auto runs = parallel_map<std::vector<TransportResult>>(omegas.size(), [&](std::size_t i) {
                return transport_moments_multi(t_lambda, omegas[i], t_length, powers, Tg, topt);
            });
            csv << "omega,p,T,moment,beta,beta_fit\n";
            json arr = json::array();
            for (const auto& run : runs)
                for (const auto& r : run) {
                    json rows = json::array();
                    for (const auto& row : r.rows) {
                        csv << fmt17(r.omega) << ',' << fmt17(r.p) << ',' << fmt17(row.T) << ',' << fmt17(row.moment)
                            << ',' << fmt17(row.beta) << ',' << fmt17(r.beta_fit) << '\n';
                        rows.push_back({{"T", row.T}, {"moment", row.moment}, {"beta", row.beta}});
                    }
                    arr.push_back({{"omega", r.omega},
                                   {"p", r.p},
                                   {"beta_fit", r.beta_fit},
                                   {"max_unitarity_error", r.max_unitarity_error},
                                   {"max_outside", r.max_outside},
                                   {"rows", rows}});
                }
            res.data_json = {{"lambda", t_lambda}, {"length", t_length}, {"runs", arr}};
        } else if (sub == sweep) {
            auto lambdas = parse_grid(s_lambdas);
            std::sort(lambdas.begin(), lambdas.end());
            require_positive(lambdas);
            ReportOptions ro;
            auto hs = parallel_map<BandHierarchy>(lambdas.size(),
                                                  [&](std::size_t i) { return report_bands(lambdas[i], s_kmax, ro); });
            // Compare couplings at a common depth: the deepest level all of them reached.
            int common_k = s_kmax;
            for (const auto& h : hs) common_k = std::min(common_k, h.k_max());
            for (auto& h : hs) h.levels.resize(common_k + 1);
            const auto reports =
                parallel_map<SpectralReport>(hs.size(), [&](std::size_t i) { return full_report(hs[i], ro); });
            json arr = json::array();
            for (const auto& r : reports) arr.push_back(report_json(r));
            if (s_report == "asymptotics") {
                const AsymptoticsAudit a = asymptotics_audit(reports, s_tol);
                write_asymptotics_csv(csv, a);
                json rows = json::array();
                for (const auto& row : a.rows)
                    rows.push_back({{"lambda", row.lambda}, {"k_max", row.k_max}, {"products", row.products}});
                res.data_json = {{"targets", a.targets},
                                 {"rows", rows},
                                 {"within_tolerance", a.within_tolerance},
                                 {"monotone", a.monotone},
                                 {"pass", a.pass()}};
                if (!a.pass()) res.code = kExitInconclusive;
            } else {
                csv << "lambda,k_max,gamma,dim_nu,dim_sigma,alpha,chain\n";
                for (const auto& r : reports) {
                    csv << fmt17(r.lambda) << ',' << r.k_max << ',' << fmt17(r.gamma.value) << ','
                        << fmt17(r.dim_nu.value) << ',' << fmt17(r.dim_sigma.value) << ',' << fmt17(r.alpha.value)
                        << ',' << to_string(r.chain) << '\n';
                    if (r.chain != ChainStatus::strict) res.code = kExitInconclusive;
                }
                res.data_json = {{"reports", arr}};
            }
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    }

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto cfg = config_echo(app, sub);
    std::ostringstream doc;
    if (as_json) {
        json meta = {{"version", kLibraryVersion}, {"command", sub->get_name()}};
        json c = json::object();
        for (const auto& [k, v] : cfg) c[k] = v;
        meta["config"] = c;
        meta["exit_code"] = res.code;
        meta["wall_time_s"] = wall;
        json top = {{"metadata", meta}, {"data", res.data_json}};
        doc << top.dump(2) << '\n';
    } else {
        doc << "# fibham " << kLibraryVersion << '\n';
        doc << "# command: " << sub->get_name() << '\n';
        doc << "# config:";
        for (const auto& [k, v] : cfg) doc << ' ' << k << '=' << v;
        doc << '\n';
        doc << "# exit_code: " << res.code << '\n';
        doc << "# wall_time_s: " << fmt17(wall) << '\n';
        doc << csv.str();
    }
    if (common.output.empty()) {
        out << doc.str();
    } else {
        std::ofstream f(common.output, std::ios::binary);
        if (!f) {
            err << "error: cli: cannot open output file '" << common.output << "'\n";
            return kExitError;
        }
        f << doc.str();
    }
    return res.code;
}

}  // namespace fibham::cli
