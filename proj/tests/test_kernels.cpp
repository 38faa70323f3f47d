#include <catch_amalgamated.hpp>

#include <cmath>

#include <lvv/kernels.hpp>
#include <lvv/rng.hpp>

using namespace lvv;
using Catch::Approx;

namespace {

// mpmath at 30 digits
constexpr double kFd025_1_05 = 0.927729608579000844002719043267;
constexpr double kDtFd025_1_05 = 0.463864804289500422001359521634;
constexpr double kL2Frac025_A100 = 1.04866908732002997371360858094;
constexpr double kL2Frac025_Full = 1.06384608107048714009182228431;
constexpr double kTailFrac025_A1000 = 0.00481015763046515543992023904051;

// midpoint sum of f(1,s)^2 over [-A,1] with cells graded toward s=0 and s=1
double riemann_l2(const KernelHandle& k, double A, int n) {
    double acc = 0.0;
    auto piece = [&](double a, double b, double p, bool toward_b, int m) {
        for (int i = 0; i < m; ++i) {
            double y0 = double(i) / m, y1 = double(i + 1) / m;
            double x0 = std::pow(y0, p), x1 = std::pow(y1, p);
            double s0 = toward_b ? b - (b - a) * x1 : a + (b - a) * x0;
            double s1 = toward_b ? b - (b - a) * x0 : a + (b - a) * x1;
            double mid = 0.5 * (s0 + s1);
            double v = k.f3(1.0, mid, 1.0 - mid);
            acc += v * v * (s1 - s0);
        }
    };
    piece(-A, 0.0, 3.0, true, n / 2);
    piece(0.0, 0.5, 3.0, false, n / 4);
    piece(0.5, 1.0, 3.0, true, n / 4);
    return acc;
}

}  // namespace

TEST_CASE("fractional kernel closed forms") {
    auto k = frac_kernel(0.25);
    CHECK(k.eval(1.0, 0.5) == Approx(kFd025_1_05).epsilon(1e-14));
    CHECK(k.eval_dt(1.0, 0.5) == Approx(kDtFd025_1_05).epsilon(1e-14));
    double h = 1e-6;
    CHECK((k.eval(1.0 + h, 0.5) - k.eval(1.0 - h, 0.5)) / (2 * h) == Approx(kDtFd025_1_05).epsilon(1e-7));
    for (double s : {-5.0, -1.0, -1e-3, 0.3}) CHECK(k.eval(0.0, s) == 0.0);
    CHECK(k.diag(0.7) == 0.0);
    CHECK_THROWS_AS(frac_kernel(0.5), std::invalid_argument);
    CHECK_THROWS_AS(frac_kernel(0.0), std::invalid_argument);
}

TEST_CASE("indicator kernel") {
    auto k = indicator_kernel();
    CHECK(k.eval(1.0, 0.5) == 1.0);
    CHECK(k.eval(0.5, 1.0) == 0.0);
    CHECK(k.eval(1.0, -0.5) == 0.0);
    CHECK(k.eval_dt(1.0, 0.5) == 0.0);
    CHECK(k.tau == 0.0);
}

TEST_CASE("Volterra property on random samples") {
    Xoshiro256 rng(11);
    for (auto k : {frac_kernel(0.1), frac_kernel(0.25), frac_kernel(0.4), indicator_kernel()}) {
        int bad = 0;
        for (int n = 0; n < 10000; ++n) {
            double t = 2.0 * rng.uniform(), s = t + 3.0 * rng.uniform();
            if (s > t && k.eval(t, s) != 0.0) ++bad;
        }
        CHECK(bad == 0);
    }
}

TEST_CASE("derivative consistency away from the diagonal and the origin") {
    Xoshiro256 rng(5);
    for (double d : {0.1, 0.25, 0.4}) {
        auto k = frac_kernel(d);
        double worst_t = 0.0, worst_s = 0.0;
        for (int n = 0; n < 2000; ++n) {
            double t = 0.1 + 0.9 * rng.uniform();
            double s = -5.0 + (t - 0.05 + 5.0) * rng.uniform();
            if (std::abs(s) < 0.05 || t - s < 0.05) continue;
            double h = 1e-5;
            double fdt = (k.eval(t + h, s) - k.eval(t - h, s)) / (2 * h);
            double fds = (k.eval(t, s + h) - k.eval(t, s - h)) / (2 * h);
            worst_t = std::max(worst_t, std::abs(fdt - k.eval_dt(t, s)) / std::abs(k.eval_dt(t, s)));
            worst_s = std::max(worst_s, std::abs(fds - k.eval_ds(t, s)) / std::max(std::abs(k.eval_ds(t, s)), 1e-3));
        }
        CHECK(worst_t < 1e-5);
        CHECK(worst_s < 1e-5);
    }
}

TEST_CASE("closed-form cell integrals") {
    auto k = frac_kernel(0.25);
    QuadratureSpec q;
    for (auto [a, b] : {std::pair{-3.0, -1.0}, std::pair{-0.2, 0.4}, std::pair{0.4, 1.0}}) {
        auto g = gauss_kronrod([&](double s) { return k.eval(1.0, s); }, a, b, q);
        CHECK(k.integral(1.0, a, b) == Approx(g.value).epsilon(1e-9));
    }
    auto ind = indicator_kernel();
    CHECK(ind.integral(0.7, -1.0, 0.5) == Approx(0.5));
}

TEST_CASE("l2_norm_sq") {
    QuadratureSpec q;
    CHECK(l2_norm_sq(indicator_kernel(), 1.0, q).value == Approx(1.0).epsilon(1e-13));
    CHECK(l2_norm_sq(frac_kernel(0.25), 0.0, q).value == 0.0);
    CHECK(l2_norm_sq(indicator_kernel(), 0.0, q).value == 0.0);
    auto k = frac_kernel(0.25);
    auto r = l2_norm_sq(k, 1.0, q);
    CHECK(r.value == Approx(kL2Frac025_A100).epsilon(1e-10));
    CHECK(std::abs(r.value - kL2Frac025_A100) <= r.error + 1e-12);
    double brute = riemann_l2(k, 100.0, 1000000);
    CHECK(std::abs(r.value - brute) / brute < 1e-6);
}

TEST_CASE("tail of the fractional l2 integral") {
    auto k = frac_kernel(0.25);
    QuadratureSpec q;
    q.tail_cutoff = 1e3;
    auto r = l2_norm_sq(k, 1.0, q);
    // the reported tail is an upper-bound style estimate of int_{-inf}^{-A} f^2
    CHECK(r.tail >= kTailFrac025_A1000);
    CHECK(r.tail <= 2.0 * kTailFrac025_A1000);
    // the decay rate is 2 - 2d = 1.5, so the tail at A=1e3 is about 4.5e-3 of the bulk
    CHECK(kTailFrac025_A1000 / r.value == Approx(4.54e-3).epsilon(0.01));
}

TEST_CASE("ddt_l2_norm_sq") {
    QuadratureSpec q;
    auto ind = indicator_kernel();
    for (double t : {0.1, 0.5, 1.0}) CHECK(ddt_l2_norm_sq(ind, t, q).value == Approx(1.0).epsilon(1e-14));
    auto k = frac_kernel(0.25);
    double h = 1e-4;
    double fd = (l2_norm_sq(k, 1.0 + h, q).value - l2_norm_sq(k, 1.0 - h, q).value) / (2 * h);
    CHECK(ddt_l2_norm_sq(k, 1.0, q).value == Approx(fd).epsilon(1e-4));
    double small = ddt_l2_norm_sq(k, 1e-3, q).value;
    CHECK(std::abs(small) < std::abs(ddt_l2_norm_sq(k, 1e-1, q).value));
    // with an unbounded window v(t) = v(1) t^(2d+1), so v'(t) = (2d+1) v(1) t^(2d)
    CHECK(small == Approx(1.5 * kL2Frac025_Full * std::sqrt(1e-3)).epsilon(1e-2));
}

TEST_CASE("l2_norm_sq is non-decreasing for the fractional kernels") {
    QuadratureSpec q;
    for (double d : {0.1, 0.25, 0.4}) {
        auto k = frac_kernel(d);
        double prev = 0.0;
        for (int i = 1; i <= 16; ++i) {
            double v = l2_norm_sq(k, i / 16.0, q).value;
            CHECK(v >= prev);
            prev = v;
        }
    }
}

TEST_CASE("kernel registry") {
    CHECK(parse_kernel("frac:d=0.25").eval(1.0, 0.5) == Approx(kFd025_1_05));
    CHECK(parse_kernel("indicator").label == "indicator");
    CHECK_THROWS_AS(parse_kernel("nope"), ConfigError);
    CHECK_THROWS_AS(parse_kernel("frac:d"), ConfigError);
    CHECK_THROWS_AS(parse_kernel("frac:d=x"), ConfigError);
}
