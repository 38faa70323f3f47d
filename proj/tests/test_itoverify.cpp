#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include <lvv/itoverify.hpp>

using namespace lvv;
using Catch::Approx;

namespace {

ScenarioSpec small(const std::string& name, KernelHandle k, LevyModel m) {
    ScenarioSpec sc;
    sc.name = name;
    sc.kernel = std::move(k);
    sc.model = std::move(m);
    sc.A = 5.0;
    sc.n_cells = 64;
    sc.n_paths = 1500;
    sc.check_paths = 200;
    sc.seed = 11;
    return sc;
}

LevyModel mixed() { return make_model(0.5, CompoundPoisson{2.0, UniformLaw{-1.0, 1.0}}); }

}  // namespace

TEST_CASE("moment gate orders") {
    auto k = frac_kernel(0.25);
    auto cp = make_model(0.0, CompoundPoisson{1.0, ParetoLaw{1.0, 3.0}});
    CHECK(moment_gate(gaussian_bump(1, 0, 1), k, cp, 1.0).order == 2.0);
    CHECK(moment_gate(gaussian_bump(1, 0, 1), k, cp, 1.0).pass);
    CHECK(moment_gate(gaussian_bump(1, 0, 1), indicator_kernel(), cp, 1.0).order == 4.0);
    CHECK_FALSE(moment_gate(gaussian_bump(1, 0, 1), indicator_kernel(), cp, 1.0).pass);
    auto g = moment_gate(polynomial({0, 0, 0, 1}), k, mixed(), 1.0);
    CHECK(g.order == 8.0);
    CHECK(g.pass);
    auto sc = small("pareto", indicator_kernel(), cp);
    CHECK_THROWS_AS(eval_terms_expectation(gaussian_bump(1, 0, 1), sc), ConfigError);
}

TEST_CASE("bump weights integrate smooth functions against x^k g1 nu") {
    auto m = mixed();
    Bump b{0.2, 0.7, false};
    auto xl = make_x_lattice(m, 8);
    CHECK(xl.interpolating());
    auto c = bump_weights(xl, b, 2);
    auto h = [](double x) { return std::exp(0.5 * x) + x * x; };
    double lat = 0.0;
    for (std::size_t i = 0; i < xl.size(); ++i) lat += c[i] * h(xl.x[i]);
    double exact = bump_nu_integral(m.jumps, b, [&](double x) { return x * x * h(x); });
    CHECK(lat == Approx(exact).epsilon(1e-6));
    // direct weights for a law without interpolation
    auto ts = make_model(0.0, TemperedStable{0.5, 1.0, 1.0});
    double exact_ts = bump_nu_integral(ts.jumps, Bump{0.5, 1.5, false}, [](double x) { return x; });
    auto lattice_sum = [&](int order) {
        auto xt = make_x_lattice(ts, order);
        CHECK_FALSE(xt.interpolating());
        auto ct = bump_weights(xt, Bump{0.5, 1.5, false}, 1);
        double l2 = 0.0;
        for (double v : ct) l2 += v;
        return std::abs(l2 - exact_ts);
    };
    // the bump is only resolved as the rule is refined
    CHECK(lattice_sum(16) < 1e-3 * exact_ts);
    CHECK(lattice_sum(32) < 0.1 * lattice_sum(16));
}

TEST_CASE("lattice reproduces the kernel increment") {
    // int_{0 v s}^T df/dt dt = f(T,s) - f(0 v s, s)
    auto k = frac_kernel(0.3);
    ItoLattice lat(k, mixed(), 1.0, 5.0, LatticeSpec{});
    REQUIRE_FALSE(lat.empty());
    for (auto& r : lat.rows()) {
        double acc = 0.0;
        for (double w : r.w) acc += w;
        double lo = std::max(0.0, r.s);
        CHECK(acc == Approx(k.eval(1.0, r.s) - k.eval(lo, r.s)).margin(1e-9));
    }
    CHECK(ItoLattice(indicator_kernel(), mixed(), 1.0, 5.0, LatticeSpec{}).empty());
}

TEST_CASE("expectation mode: quadratic G gives the isometry") {
    auto sc = small("bm", frac_kernel(0.25), make_model(1.0, NoJumps{}));
    auto ts = eval_terms_expectation(polynomial({0, 0, 1}), sc);
    QuadratureSpec q;
    q.tail_cutoff = sc.A;
    double v = l2_norm_sq(sc.kernel, 1.0, q).value;
    // G'' = 2, so the Gaussian term is exactly v(T)
    CHECK(ts.term_sigma.value == Approx(v).epsilon(1e-10));
    CHECK(ts.term_sigma.std_error < 1e-12);
    CHECK(std::abs(ts.lhs.value - v) <= 3.0 * ts.lhs.std_error + ts.discretisation);
    CHECK(ts.term_nu.value == 0.0);
    CHECK(ts.pass);
}

TEST_CASE("expectation mode: constant G has no terms") {
    auto sc = small("mixed", indicator_kernel(), mixed());
    auto ts = eval_terms_expectation(constant_function(3.0), sc);
    CHECK(ts.lhs.value == 0.0);
    CHECK(ts.term_jumpsum.value == 0.0);
    CHECK(ts.residual.value == 0.0);
    CHECK(ts.pass);
}

TEST_CASE("expectation mode on jump scenarios") {
    auto G = gaussian_bump(1.0, 0.2, 0.8);
    SECTION("indicator kernel: jump sum and its compensator") {
        auto ts = eval_terms_expectation(G, small("ind", indicator_kernel(), mixed()));
        INFO(to_json(ts).dump(2));
        CHECK(ts.pass);
        CHECK(ts.jumpsum_check.present);
        CHECK(ts.jumpsum_check.pass);
        CHECK(ts.term_nu.note == "df/dt = 0");
    }
    SECTION("fractional kernel: continuous M, the nu term carries the jumps") {
        auto ts = eval_terms_expectation(G, small("frac", frac_kernel(0.25), mixed()));
        INFO(to_json(ts).dump(2));
        CHECK(ts.pass);
        CHECK(ts.term_jumpsum.value == 0.0);
        CHECK(ts.term_nu.value != 0.0);
        CHECK_FALSE(ts.jumpsum_check.present);
    }
}

TEST_CASE("S-transform mode with g = 0 equals expectation mode") {
    auto sc = small("frac", frac_kernel(0.25), mixed());
    auto G = damped_poly(0.0, 1.0, 0.5, 1.0);
    auto e = eval_terms_expectation(G, sc);
    auto s = eval_terms_stransform(G, sc, {zero_functional()});
    REQUIRE(s.size() == 1);
    CHECK(s[0].residual.value == Approx(e.residual.value).epsilon(1e-12));
    CHECK(s[0].term_L.value == 0.0);
    CHECK(s[0].term_lambda.value == 0.0);
    CHECK(s[0].lhs_oracles.pass);
}

TEST_CASE("S-transform mode: identity G closes exactly") {
    auto sc = small("frac", frac_kernel(0.25), mixed());
    auto g = battery_member("g4");
    auto s = eval_terms_stransform(polynomial({0, 1}), sc, {g});
    QuadratureSpec q;
    q.tail_cutoff = sc.A;
    double sm = s_M(sc.kernel, sc.model, g, 1.0, q).value;
    // per path L + Lambda is the deterministic S(M(T)), so its weighted mean is S(M(T)) mean(w)
    CHECK(s[0].term_L.value + s[0].term_lambda.value == Approx(sm * s[0].weights.mean).epsilon(1e-5));
    CHECK(s[0].pass);
    CHECK(s[0].lhs_oracles.pass);
}

TEST_CASE("S-transform mode across the battery") {
    auto sc = small("mixed", frac_kernel(0.25), mixed());
    auto cells = eval_terms_stransform(gaussian_bump(1.0, 0.0, 0.7), sc, builtin_battery());
    REQUIRE(cells.size() == 8);
    for (auto& c : cells) {
        INFO(c.g << " res " << c.residual.value << " budget " << c.budget);
        CHECK(c.pass);
        CHECK(c.lhs_oracles.pass);
        CHECK(c.weights.variance <= 10.0);
    }
    auto rep = verification_report(cells);
    CHECK(rep.pass);
}

TEST_CASE("indicator kernel: no Lambda term in S-transform mode") {
    auto sc = small("ind", indicator_kernel(), mixed());
    auto cells = eval_terms_stransform(gaussian_bump(1.0, 0.1, 0.9), sc, {battery_member("g2"), battery_member("g5")});
    for (auto& c : cells) {
        CHECK(c.term_lambda.value == 0.0);
        CHECK(c.term_nu.value == 0.0);
        CHECK(c.term_L.value != 0.0);
        CHECK(c.pass);
        CHECK(c.jumpsum_check.pass);
    }
}

TEST_CASE("polynomial G without a Gaussian part") {
    auto sc = small("cp", frac_kernel(0.25), make_model(0.0, CompoundPoisson{2.0, UniformLaw{-1.0, 1.0}}));
    CHECK_NOTHROW(eval_terms_expectation(polynomial({0, 0, 1}), sc));
    CHECK_THROWS_AS(eval_terms_stransform(polynomial({0, 0, 1}), sc, {battery_member("g1")}), ConfigError);
}

TEST_CASE("fault injection is caught and attributed") {
    auto sc = small("bm", frac_kernel(0.25), mixed());
    sc.fault_term = "term_nu";
    sc.fault_scale = 1.5;
    auto ts = eval_terms_expectation(polynomial({0, 0, 1}), sc);
    CHECK_FALSE(ts.pass);
    auto rep = verification_report({ts});
    CHECK_FALSE(rep.pass);
    REQUIRE(rep.failures.size() == 1);
    CHECK(rep.failures[0].find("suspect term_nu") != std::string::npos);
    // a bounded G: the Gaussian term is checked through the Fourier route
    sc.fault_term = "term_sigma";
    sc.fault_scale = 2.0;
    auto tb = eval_terms_expectation(gaussian_bump(1.0, 0.0, 0.5), sc);
    CHECK_FALSE(tb.pass);
    CHECK(tb.suspect == "term_sigma");
    REQUIRE(tb.term_checks.count("lhs"));
    CHECK(tb.term_checks.at("lhs").pass);
    sc.fault_term = "bogus";
    CHECK_THROWS_AS(eval_terms_expectation(polynomial({0, 0, 1}), sc), ConfigError);
}

TEST_CASE("report layout") {
    auto sc = small("bm", frac_kernel(0.25), make_model(1.0, NoJumps{}));
    sc.n_paths = 300;
    sc.check_paths = 50;
    auto ts = eval_terms_expectation(gaussian_bump(1.0, 0.0, 1.0), sc);
    auto rep = verification_report({ts});
    auto j = rep.to_json();
    CHECK(j["modes"].contains("expectation"));
    CHECK_FALSE(j["modes"].contains("stransform"));
    CHECK_FALSE(j["modes"].contains("pathwise"));
    CHECK(j["verdict"] == (rep.pass ? "PASS" : "FAIL"));
    auto txt = rep.to_text();
    CHECK(txt.find("bm/gauss") != std::string::npos);
    std::ostringstream csv;
    rep.write_terms_csv(csv);
    auto text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 8);
    CHECK_THROWS(verification_report({}));
}

TEST_CASE("pathwise classical reduction") {
    auto m = mixed();
    auto grid = make_grid(0.0, 1.0, 512);
    auto k = indicator_kernel();
    auto G = gaussian_bump(1.0, 0.1, 0.6);
    auto lp = simulate_path(m, grid, 5);
    auto vp = VolterraSimulator(k, grid).simulate(lp);
    auto ts = eval_terms_pathwise(G, k, vp, lp);
    CHECK(std::abs(ts.residual.value) < 0.05);
    CHECK_THROWS_AS(eval_terms_pathwise(G, frac_kernel(0.25), vp, lp), ConfigError);
    // G(x) = x: the L-term is the whole increment
    auto id = eval_terms_pathwise(polynomial({0, 1}), k, vp, lp);
    CHECK(id.residual.value == Approx(0.0).margin(1e-12));
    auto st = pathwise_refinement(G, m, 1.0, 1024, {8, 4, 2, 1}, 200, 3);
    REQUIRE(st.ratios.size() == 3);
    for (double r : st.ratios) CHECK(r > 1.2);
    CHECK(st.rms_residual.back() < st.rms_residual.front());
}

TEST_CASE("connection check on a continuous-M kernel") {
    auto sc = small("frac", frac_kernel(0.25), mixed());
    auto res = connection_check(sc, {battery_member("g1"), battery_member("g6")});
    for (auto& c : res) {
        INFO(to_json(c).dump());
        CHECK(c.pass);
        CHECK(std::abs(c.lhs_mc - c.rhs) <= 3.0 * std::max(c.lhs_mc_se, c.rhs_se) + c.quad + c.discretisation);
    }
    CHECK_THROWS_AS(connection_check(small("ind", indicator_kernel(), mixed()), {battery_member("g1")}), ConfigError);
}
