#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include <lvv/levy.hpp>

using namespace lvv;
using Catch::Approx;

namespace {

struct Stats {
    double mean = 0.0, var = 0.0, se = 0.0;
};

Stats stats(const std::vector<double>& v) {
    Stats s;
    for (double x : v) s.mean += x;
    s.mean /= v.size();
    for (double x : v) s.var += (x - s.mean) * (x - s.mean);
    s.var /= (v.size() - 1);
    s.se = std::sqrt(s.var / v.size());
    return s;
}

// standard error of the sample variance from the fourth central moment
double var_se(const std::vector<double>& v, double mean) {
    double m2 = 0.0, m4 = 0.0;
    for (double x : v) {
        double d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= v.size();
    m4 /= v.size();
    return std::sqrt((m4 - m2 * m2) / v.size());
}

}  // namespace

TEST_CASE("drift_gamma examples") {
    CHECK(drift_gamma(CompoundPoisson{2.0, AtomLaw{{{2.0, 1.0}}}}) == -4.0);
    CHECK(drift_gamma(CompoundPoisson{5.0, UniformLaw{-1.0, 1.0}}) == 0.0);
    CHECK(drift_gamma(TemperedStable{0.5, 1.0, 1.0}) == 0.0);
    // uniform on [0, 3]: -rate * int_1^3 x dx / 3
    CHECK(drift_gamma(CompoundPoisson{1.5, UniformLaw{0.0, 3.0}}) == Approx(-1.5 * 4.0 / 3.0));
}

TEST_CASE("nu_moment examples") {
    JumpSpec atom = CompoundPoisson{2.0, AtomLaw{{{2.0, 1.0}}}};
    CHECK(nu_moment(atom, 2) == 8.0);
    CHECK(nu_moment(atom, 3) == 16.0);
    for (int k : {2, 3, 7}) CHECK(nu_moment(NoJumps{}, k) == 0.0);
    CHECK(nu_moment(CompoundPoisson{1.0, ParetoLaw{1.0, 3.0}}, 4) == inf);
    CHECK(nu_moment(CompoundPoisson{3.0, UniformLaw{-1.0, 1.0}}, 2) == Approx(1.0));
    CHECK_THROWS_AS(nu_moment(atom, 1), std::invalid_argument);
}

TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS(validate(JumpSpec{CompoundPoisson{2.0, AtomLaw{{{0.0, 1.0}}}}}));
    CHECK_THROWS(validate(JumpSpec{CompoundPoisson{-1.0, UniformLaw{-1.0, 1.0}}}));
    CHECK_THROWS(validate(JumpSpec{TemperedStable{2.0, 1.0, 1.0}}));
    CHECK_THROWS(validate(JumpSpec{CompoundPoisson{1.0, ParetoLaw{1.0, 2.0}}}));
    CHECK_THROWS(make_grid(1.0, 0.0, 10));
    CHECK_THROWS(make_grid(1.0, 1.0, 0));
}

TEST_CASE("default small-jump cutoff carries the requested variance fraction") {
    TemperedStable ts{0.7, 1.5, 2.0};
    double eps = default_cutoff(ts);
    CHECK(small_jump_variance(ts, eps) / abs_moment(ts, 2.0) == Approx(1e-4).epsilon(1e-8));
}

TEST_CASE("grid layout") {
    auto g = make_grid(100.0, 1.0, 64);
    CHECK(g.nodes.front() == -100.0);
    CHECK(g.nodes[g.zero_index] == 0.0);
    CHECK(g.nodes.back() == 1.0);
    CHECK(g.n_positive_cells() == 64);
    for (std::size_t i = 0; i + 1 < g.nodes.size(); ++i) CHECK(g.nodes[i] < g.nodes[i + 1]);
    CHECK(g.cell_of(0.5) == g.zero_index + 31);
}

TEST_CASE("pure Gaussian driver") {
    auto m = make_model(1.0, NoJumps{});
    std::vector<double> sums;
    for (std::uint64_t s = 0; s < 4000; ++s) {
        auto p = simulate_path(m, 0.0, 1.0, 16, s);
        CHECK(p.jumps.empty());
        double acc = 0.0;
        for (double d : p.dW) acc += d;
        sums.push_back(acc);
    }
    auto st = stats(sums);
    CHECK(std::abs(st.mean) <= 3.0 * st.se);
    CHECK(std::abs(st.var - 1.0) <= 3.0 * var_se(sums, st.mean));
}

TEST_CASE("compound Poisson jump count") {
    auto m = make_model(0.0, CompoundPoisson{2.0, AtomLaw{{{2.0, 1.0}}}});
    std::vector<double> counts;
    for (std::uint64_t s = 0; s < 10000; ++s) counts.push_back(double(simulate_path(m, 0.0, 1.0, 4, s).jumps.size()));
    auto st = stats(counts);
    CHECK(std::abs(st.mean - 2.0) <= 3.0 * st.se);
}

TEST_CASE("jump placement never hits a node") {
    auto m = make_model(0.0, CompoundPoisson{50.0, UniformLaw{-1.0, 1.0}});
    for (std::uint64_t s = 0; s < 50; ++s) {
        auto p = simulate_path(m, 2.0, 1.0, 8, s);
        for (auto& j : p.jumps) {
            CHECK(j.time > -2.0);
            CHECK(j.time <= 1.0);
            CHECK_FALSE(std::binary_search(p.grid.nodes.begin(), p.grid.nodes.end(), j.time));
        }
        CHECK(std::is_sorted(p.jumps.begin(), p.jumps.end(), [](auto& a, auto& b) { return a.time < b.time; }));
    }
}

TEST_CASE("centring and variance of L(1) for every built-in jump spec") {
    std::vector<LevyModel> models{
        make_model(1.0, NoJumps{}),
        make_model(0.0, CompoundPoisson{2.0, AtomLaw{{{2.0, 1.0}}}}),
        make_model(0.5, CompoundPoisson{2.0, UniformLaw{-1.0, 1.0}}),
        make_model(0.0, CompoundPoisson{1.0, ParetoLaw{0.5, 5.0}}),
        make_model(0.0, TemperedStable{0.5, 1.0, 1.0}),
        make_model(0.2, TemperedStable{1.2, 2.0, 0.5}, 0.01, false),
    };
    for (auto& m : models) {
        std::vector<double> L1;
        for (std::uint64_t s = 0; s < 10000; ++s) L1.push_back(reconstruct_L(simulate_path(m, 0.0, 1.0, 4, s)).back());
        auto st = stats(L1);
        CHECK(std::abs(st.mean) <= 3.0 * st.se);
        double target = m.variance_rate();
        if (auto* ts = std::get_if<TemperedStable>(&m.jumps); ts && !m.gauss_compensation)
            target -= small_jump_variance(*ts, m.small_jump_cutoff);
        CHECK(std::abs(st.var - target) <= 3.0 * var_se(L1, st.mean));
    }
}

TEST_CASE("two halves are uncorrelated") {
    auto m = make_model(0.5, CompoundPoisson{2.0, UniformLaw{-1.0, 1.0}});
    std::vector<double> prod;
    for (std::uint64_t s = 0; s < 10000; ++s) {
        auto p = simulate_path(m, 1.0, 1.0, 4, s);
        double a = 0.0, b = 0.0;
        for (std::size_t j = 0; j < p.dW.size(); ++j) (j < p.grid.zero_index ? a : b) += p.sigma * p.dW[j];
        for (auto& jp : p.jumps) (jp.time <= 0.0 ? a : b) += jp.size;
        prod.push_back(a * b);
    }
    auto st = stats(prod);
    CHECK(std::abs(st.mean) <= 3.0 * st.se);
}

TEST_CASE("reproducibility") {
    auto m = make_model(0.3, CompoundPoisson{3.0, UniformLaw{-1.0, 2.0}});
    auto a = simulate_path(m, 5.0, 1.0, 64, 77);
    auto b = simulate_path(m, 5.0, 1.0, 64, 77);
    auto c = simulate_path(m, 5.0, 1.0, 64, 78);
    CHECK(a.dW == b.dW);
    REQUIRE(a.jumps.size() == b.jumps.size());
    for (std::size_t i = 0; i < a.jumps.size(); ++i) {
        CHECK(a.jumps[i].time == b.jumps[i].time);
        CHECK(a.jumps[i].size == b.jumps[i].size);
    }
    CHECK(a.dW != c.dW);
}

TEST_CASE("coarsening keeps the driver") {
    auto m = make_model(1.0, CompoundPoisson{2.0, UniformLaw{-1.0, 1.0}});
    auto p = simulate_path(m, 3.0, 1.0, 64, 5);
    auto q = coarsen(p, 4);
    CHECK(q.grid.n_positive_cells() == 16);
    auto Lp = reconstruct_L(p), Lq = reconstruct_L(q);
    for (std::size_t i = 0; i < Lq.size(); ++i) CHECK(Lq[i] == Approx(Lp[4 * i]).margin(1e-13));
    CHECK_THROWS(coarsen(p, 3));
}

TEST_CASE("csv export") {
    auto m = make_model(1.0, CompoundPoisson{2.0, AtomLaw{{{1.0, 0.5}, {-1.0, 0.5}}}});
    auto p = simulate_path(m, 1.0, 1.0, 8, 3);
    std::ostringstream os;
    write_csv(p, os);
    std::string s = os.str();
    CHECK(s.rfind("time,gaussian_cumsum,jump_time,jump_size\n", 0) == 0);
    std::size_t lines = std::count(s.begin(), s.end(), '\n');
    CHECK(lines == 1 + p.grid.nodes.size() + p.jumps.size());
}
