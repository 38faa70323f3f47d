#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kernels.hpp"
#include "levy.hpp"

namespace lvv {

// ------------------------------------------------------------ test functionals

// exp(1 - 1/(1-y^2)) on [a,b], y mapped to (-1,1); mirrored puts it on [-b,-a]
struct Bump {
    double a = 0.25, b = 0.75;
    bool mirrored = false;

    double lo() const { return mirrored ? -b : a; }
    double hi() const { return mirrored ? -a : b; }
    double operator()(double x) const {
        if (mirrored) x = -x;
        if (!(x > a && x < b)) return 0.0;
        double y = (2.0 * x - a - b) / (b - a);
        return std::exp(1.0 - 1.0 / (1.0 - y * y));
    }
};

// poly(t-c) exp(-(t-c)^2 / (2 w^2)), poly given by coefficients of (t-c)^k
struct TimeProfile {
    double center = 0.5, width = 0.3;
    std::vector<double> poly{1.0};

    double operator()(double t) const {
        double z = t - center, p = 0.0;
        for (std::size_t k = poly.size(); k-- > 0;) p = p * z + poly[k];
        return p * std::exp(-z * z / (2.0 * width * width));
    }
    // interval outside of which the profile is below 1e-17 of its scale
    std::pair<double, double> support() const {
        double r = width * (9.0 + std::sqrt(2.0 * poly.size()));
        return {center - r, center + r};
    }
};

struct JumpTerm {
    double mu = 1.0;
    Bump g1;
    TimeProfile g2;
};

struct GaussTerm {
    double lambda = 1.0;
    TimeProfile h;
};

// g(x,t) = sum mu_j g1_j(x) g2_j(t) for x != 0 and g(0,t) = sum lambda_k h_k(t).
struct TestFunctional {
    std::string name = "zero";
    std::vector<JumpTerm> jump_terms;
    std::vector<GaussTerm> gauss_terms;
    double n = 10.0;  // support and size bound of the jump factors

    bool is_zero() const { return jump_terms.empty() && gauss_terms.empty(); }
    double g(double x, double t) const {
        if (x == 0.0) return g0(t);
        double acc = 0.0;
        for (auto& j : jump_terms) acc += j.mu * j.g1(x) * j.g2(t);
        return acc;
    }
    double g0(double t) const {
        double acc = 0.0;
        for (auto& k : gauss_terms) acc += k.lambda * k.h(t);
        return acc;
    }
    double gstar(double x, double t) const { return x * g(x, t); }
    std::pair<double, double> time_support() const {
        double lo = inf, hi = -inf;
        auto take = [&](const TimeProfile& p) {
            auto [a, b] = p.support();
            lo = std::min(lo, a);
            hi = std::max(hi, b);
        };
        for (auto& j : jump_terms) take(j.g2);
        for (auto& k : gauss_terms) take(k.h);
        return {lo, hi};
    }
};

inline void validate(const TestFunctional& g) {
    require(g.n >= 1.0, "test functional bound n must be >= 1");
    for (auto& j : g.jump_terms) {
        require(j.g1.a > 0.0 && j.g1.a < j.g1.b, "bump support must satisfy 0 < a < b");
        require(j.g1.a >= 1.0 / g.n && j.g1.b <= g.n, "bump support must lie in [1/n, n]");
        require(std::abs(j.mu) <= g.n, "bump height must not exceed n");
        require(j.g2.width > 0.0 && !j.g2.poly.empty(), "time profile needs a positive width");
    }
    for (auto& k : g.gauss_terms) require(k.h.width > 0.0 && !k.h.poly.empty(), "time profile needs a positive width");
}

inline TestFunctional zero_functional() { return {}; }

// Eight linearly independent elements; weights stay well inside Var(w) <= 10 for the built-in models.
inline std::vector<TestFunctional> builtin_battery() {
    Bump pos{0.2, 0.9, false}, neg{0.2, 0.9, true}, hi{0.5, 0.95, false};
    auto prof = [](double c, double w, std::vector<double> p = {1.0}) { return TimeProfile{c, w, std::move(p)}; };
    std::vector<TestFunctional> out(8);
    out[0].name = "g1";
    out[0].gauss_terms = {{0.8, prof(0.5, 0.3)}};
    out[1].name = "g2";
    out[1].jump_terms = {{1.5, pos, prof(0.5, 0.3)}};
    out[2].name = "g3";
    out[2].jump_terms = {{1.5, neg, prof(0.3, 0.4, {1.0, 1.0})}};
    out[3].name = "g4";
    out[3].gauss_terms = {{0.5, prof(0.8, 0.25)}};
    out[3].jump_terms = {{1.0, pos, prof(0.2, 0.3)}};
    out[4].name = "g5";
    out[4].jump_terms = {{-2.5, hi, prof(0.6, 0.2)}};
    out[5].name = "g6";
    out[5].gauss_terms = {{1.0, prof(0.4, 0.35, {0.0, 2.0})}};
    out[6].name = "g7";
    out[6].gauss_terms = {{0.7, prof(-0.5, 0.4)}};
    out[6].jump_terms = {{1.2, neg, prof(-0.3, 0.5)}};
    out[7].name = "g8";
    out[7].gauss_terms = {{-0.6, prof(0.2, 0.3)}};
    out[7].jump_terms = {{1.2, pos, prof(0.7, 0.3)}, {-1.0, neg, prof(0.7, 0.3)}};
    return out;
}

inline TestFunctional battery_member(const std::string& name) {
    if (name == "zero") return zero_functional();
    for (auto& g : builtin_battery())
        if (g.name == name) return g;
    throw ConfigError("unknown test functional '" + name + "'");
}

// ------------------------------------------------------- nu-moments of the bumps

// int h(x) g1(x) nu(dx) over the bump support
template <class H>
double bump_nu_integral(const JumpSpec& js, const Bump& b, H&& h) {
    NuRule r = make_nu_rule(js, 48, 8, b.lo(), b.hi());
    double acc = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) acc += r.w[i] * h(r.x[i]) * b(r.x[i]);
    return acc;
}

inline double profile_integral(const TimeProfile& p, double lo, double hi) {
    auto [a, b] = p.support();
    a = std::max(a, lo);
    b = std::min(b, hi);
    if (!(b > a)) return 0.0;
    QuadratureSpec q;
    q.abs_tol = 1e-15;
    q.rel_tol = 1e-13;
    return gauss_kronrod([&](double t) { return p(t); }, a, b, q).value;
}

inline double profile_product_integral(const TimeProfile& p1, const TimeProfile& p2, double lo, double hi) {
    auto [a1, b1] = p1.support();
    auto [a2, b2] = p2.support();
    double a = std::max({a1, a2, lo}), b = std::min({b1, b2, hi});
    if (!(b > a)) return 0.0;
    QuadratureSpec q;
    q.abs_tol = 1e-15;
    q.rel_tol = 1e-13;
    return gauss_kronrod([&](double t) { return p1(t) * p2(t); }, a, b, q).value;
}

// Deterministic pieces of g against a model.
struct GMoments {
    std::vector<double> comp;   // int x g1_j nu(dx)
    std::vector<double> kappa;  // int x^2 g1_j nu(dx)
};

inline GMoments g_moments(const TestFunctional& g, const JumpSpec& js) {
    GMoments m;
    for (auto& j : g.jump_terms) {
        m.comp.push_back(bump_nu_integral(js, j.g1, [](double x) { return x; }));
        m.kappa.push_back(bump_nu_integral(js, j.g1, [](double x) { return x * x; }));
    }
    return m;
}

// rho(s) = sigma g(0,s) + int x g*(x,s) nu(dx): the drift L acquires under Q_g
struct Tilt {
    double sigma = 0.0;
    TestFunctional g;
    GMoments mom;

    Tilt() = default;
    Tilt(const LevyModel& model, TestFunctional gg) : sigma(model.sigma), g(std::move(gg)), mom(g_moments(g, model.jumps)) {}
    double operator()(double s) const {
        double acc = sigma * g.g0(s);
        for (std::size_t j = 0; j < g.jump_terms.size(); ++j)
            acc += g.jump_terms[j].mu * mom.kappa[j] * g.jump_terms[j].g2(s);
        return acc;
    }
};

// log E w^2 = int g(0,t)^2 dt + int int g*^2 nu dt over [lo, hi]
inline double log_weight_second_moment(const TestFunctional& g, const JumpSpec& js, double lo, double hi) {
    double acc = 0.0;
    for (auto& a : g.gauss_terms)
        for (auto& b : g.gauss_terms) acc += a.lambda * b.lambda * profile_product_integral(a.h, b.h, lo, hi);
    for (auto& a : g.jump_terms)
        for (auto& b : g.jump_terms) {
            double tt = profile_product_integral(a.g2, b.g2, lo, hi);
            if (tt == 0.0) continue;
            NuRule r = make_nu_rule(js, 48, 8, std::max(a.g1.lo(), b.g1.lo()), std::min(a.g1.hi(), b.g1.hi()));
            double xx = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) xx += r.w[i] * r.x[i] * r.x[i] * a.g1(r.x[i]) * b.g1(r.x[i]);
            acc += a.mu * b.mu * xx * tt;
        }
    return acc;
}

// ------------------------------------------------------------ Doleans weight

// exp(int g(0,t) dW - 1/2 int g(0,t)^2 dt - int int g* nu dt) prod (1 + g*(dL, t))
// on the path's grid, with g(0,.) replaced by its cell averages.
class WeightEngine {
public:
    WeightEngine(const TestFunctional& g, const LevyModel& model, const TimeGrid& grid) : g_(g), grid_(grid) {
        validate(g);
        const std::size_t nc = grid.n_cells();
        a_.assign(nc, 0.0);
        Rule r = gauss_legendre(6);
        auto [lo, hi] = g.time_support();
        if (!g.gauss_terms.empty())
            for (std::size_t j = 0; j < nc; ++j) {
                double l = grid.nodes[j], h = grid.nodes[j + 1];
                if (h < lo || l > hi) continue;
                double acc = 0.0;
                for (std::size_t i = 0; i < r.size(); ++i) acc += 0.5 * r.w[i] * g.g0(0.5 * (l + h) + 0.5 * (h - l) * r.x[i]);
                a_[j] = acc;
                quad_ += acc * acc * grid.width(j);
            }
        auto mom = g_moments(g, model.jumps);
        for (std::size_t j = 0; j < g.jump_terms.size(); ++j)
            comp_ += g.jump_terms[j].mu * mom.comp[j] * profile_integral(g.jump_terms[j].g2, -grid.A, grid.T);
        log_e2_ = log_weight_second_moment(g, model.jumps, -grid.A, grid.T);
    }

    double operator()(const LevyPath& lp) const {
        double lw = -0.5 * quad_ - comp_;
        if (!g_.gauss_terms.empty())
            for (std::size_t j = 0; j < a_.size(); ++j) lw += a_[j] * lp.dW[j];
        double prod = 1.0;
        if (!g_.jump_terms.empty())
            for (auto& jp : lp.jumps) prod *= 1.0 + g_.gstar(jp.size, jp.time);
        return std::exp(lw) * prod;
    }

    // e_g^2 = E w^2 predicted by the formula
    double predicted_second_moment() const { return std::exp(log_e2_); }
    const TestFunctional& functional() const { return g_; }
    // int g(0,t) a(t) dt with the same cell averages the weight uses
    double gauss_cell_average(std::size_t j) const { return a_[j]; }

private:
    TestFunctional g_;
    TimeGrid grid_;
    std::vector<double> a_;
    double quad_ = 0.0, comp_ = 0.0, log_e2_ = 0.0;
};

inline double doleans_weight(const TestFunctional& g, const LevyModel& model, const LevyPath& lp) {
    return WeightEngine(g, model, lp.grid)(lp);
}

// ------------------------------------------------------------ Monte Carlo

struct WeightDiagnostics {
    double mean = 0.0, variance = 0.0, negative_fraction = 0.0, second_moment = 0.0;
};

template <class V = double>
struct SEstimate {
    V value{};
    double std_error = 0.0;
    std::size_t n_paths = 0;
    WeightDiagnostics weights;
};

inline WeightDiagnostics weight_diagnostics(const std::vector<double>& w) {
    WeightDiagnostics d;
    if (w.empty()) return d;
    for (double x : w) {
        d.mean += x;
        d.second_moment += x * x;
        if (x < 0.0) d.negative_fraction += 1.0;
    }
    double n = double(w.size());
    d.mean /= n;
    d.second_moment /= n;
    d.negative_fraction /= n;
    for (double x : w) d.variance += (x - d.mean) * (x - d.mean);
    d.variance /= std::max(1.0, n - 1.0);
    return d;
}

// delete-one jackknife of the sample mean (closed form)
template <class V>
double jackknife_se(const std::vector<V>& v) {
    std::size_t n = v.size();
    if (n < 2) return 0.0;
    V mean{};
    for (auto& x : v) mean += x;
    mean /= double(n);
    double s = 0.0;
    for (auto& x : v) {
        // leave-one-out mean minus the full mean is (mean - x)/(n-1)
        double d = magnitude(V(mean - x)) / double(n - 1);
        s += d * d;
    }
    return std::sqrt(s * double(n - 1) / double(n));
}

template <class V>
V sample_mean(const std::vector<V>& v) {
    V acc{};
    for (auto& x : v) acc += x;
    return v.empty() ? acc : acc / double(v.size());
}

// S(phi)(g) = E^Q(phi) = E(phi w)
template <class V>
SEstimate<V> s_transform_mc(const std::vector<V>& phi, const std::vector<double>& w) {
    if (phi.empty()) throw std::invalid_argument("s_transform_mc needs at least one path");
    require(phi.size() == w.size(), "functional and weight samples differ in length");
    std::vector<V> prod(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) prod[i] = phi[i] * w[i];
    SEstimate<V> e;
    e.value = sample_mean(prod);
    e.std_error = jackknife_se(prod);
    e.n_paths = phi.size();
    e.weights = weight_diagnostics(w);
    return e;
}

template <class V>
nlohmann::json to_json(const SEstimate<V>& e) {
    nlohmann::json j;
    if constexpr (std::is_same_v<V, cplx>) {
        j["value"] = {e.value.real(), e.value.imag()};
    } else {
        j["value"] = e.value;
    }
    j["std_error"] = e.std_error;
    j["n_paths"] = e.n_paths;
    j["weights"] = {{"mean", e.weights.mean},
                    {"variance", e.weights.variance},
                    {"negative_fraction", e.weights.negative_fraction},
                    {"second_moment", e.weights.second_moment}};
    return j;
}

// ------------------------------------------------- deterministic S-transforms

// S(M(t))(g) = int f(t,s) rho(s) ds over the window
inline QuadResult<double> s_M(const KernelHandle& k, const LevyModel& model, const TestFunctional& g, double t,
                              const QuadratureSpec& q = {}) {
    if (g.is_zero() || t <= 0.0) return {};
    Tilt rho(model, g);
    return s_integrate(k, t, q.tail_cutoff, [&](double s, double u) { return k.f3(t, s, u) * rho(s); }, q);
}

inline QuadResult<double> s_M(const KernelHandle& k, const Tilt& rho, double t, const QuadratureSpec& q = {}) {
    if (rho.g.is_zero() || t <= 0.0) return {};
    return s_integrate(k, t, q.tail_cutoff, [&](double s, double u) { return k.f3(t, s, u) * rho(s); }, q);
}

// d/dt S(M(t))(g) = f(t,t) rho(t) + int df/dt(t,s) rho(s) ds
inline QuadResult<double> ddt_s_M(const KernelHandle& k, const Tilt& rho, double t, const QuadratureSpec& q = {}) {
    require(t > 0.0, "ddt_s_M requires t > 0");
    if (rho.g.is_zero()) return {};
    auto r = s_integrate(k, t, q.tail_cutoff, [&](double s, double u) { return k.dt3(t, s, u) * rho(s); }, q);
    r.value += k.diag(t) * rho(t);
    return r;
}

inline QuadResult<double> ddt_s_M(const KernelHandle& k, const LevyModel& model, const TestFunctional& g, double t,
                                  const QuadratureSpec& q = {}) {
    return ddt_s_M(k, Tilt(model, g), t, q);
}

namespace detail {

// s-interval where g's profiles are non-negligible, clipped to [lo, hi]
inline std::vector<double> s_breaks(const TestFunctional& g, double lo, double hi) {
    std::vector<double> cuts{lo, hi};
    auto [a, b] = g.time_support();
    for (double c : {a, b, 0.0})
        if (c > lo && c < hi) cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());
    return cuts;
}

}  // namespace detail

// int int S(X(x,s)) x g*(x,s) nu(dx) ds + sigma int S(X(0,s)) g(0,s) ds over s in [lo, hi]
template <class SX>
QuadResult<double> s_lambda_rhs(SX&& sX, const LevyModel& model, const TestFunctional& g, double lo, double hi,
                                const QuadratureSpec& q = {}) {
    QuadResult<double> out;
    if (g.is_zero() || !(hi > lo)) return out;
    std::vector<NuRule> rules;
    for (auto& j : g.jump_terms) rules.push_back(make_nu_rule(model.jumps, 32, 4, j.g1.lo(), j.g1.hi()));
    auto integrand = [&](double s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < g.jump_terms.size(); ++j) {
            auto& jt = g.jump_terms[j];
            double p = jt.g2(s);
            if (p == 0.0) continue;
            double xs = 0.0;
            for (std::size_t i = 0; i < rules[j].size(); ++i) {
                double x = rules[j].x[i];
                xs += rules[j].w[i] * sX(x, s) * x * x * jt.g1(x);
            }
            acc += jt.mu * p * xs;
        }
        if (model.sigma != 0.0 && !g.gauss_terms.empty()) acc += model.sigma * sX(0.0, s) * g.g0(s);
        return acc;
    };
    auto cuts = detail::s_breaks(g, lo, hi);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        auto r = gauss_kronrod(integrand, cuts[i], cuts[i + 1], q);
        out.value += r.value;
        out.error += r.error;
    }
    return out;
}

// int int S(X(x,s)) (1 + g*(x,s)) nu(dx) ds over s in [lo, hi]
template <class SX>
QuadResult<double> s_N_rhs(SX&& sX, const LevyModel& model, const TestFunctional& g, double lo, double hi,
                           const QuadratureSpec& q = {}) {
    QuadResult<double> out;
    if (!(hi > lo) || std::holds_alternative<NoJumps>(model.jumps)) return out;
    QuadratureSpec qi = q;
    qi.abs_tol = q.abs_tol * 1e-2;
    double err_inner = 0.0;
    auto integrand = [&](double s) {
        auto r = nu_integrate(model.jumps, [&](double x) { return sX(x, s) * (1.0 + g.gstar(x, s)); }, qi);
        err_inner = std::max(err_inner, r.error);
        return r.value;
    };
    std::vector<double> cuts = g.is_zero() ? std::vector<double>{lo, hi} : detail::s_breaks(g, lo, hi);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        auto r = gauss_kronrod(integrand, cuts[i], cuts[i + 1], q);
        out.value += r.value;
        out.error += r.error;
    }
    out.error += err_inner * (hi - lo);
    return out;
}

// int_a^b S(X(t))(g) d/dt S(M(t))(g) dt
template <class SX>
QuadResult<double> s_M_diamond_rhs(SX&& sX, const KernelHandle& k, const LevyModel& model, const TestFunctional& g,
                                   double a, double b, const QuadratureSpec& q = {}) {
    QuadResult<double> out;
    if (g.is_zero() || !(b > a)) return out;
    Tilt rho(model, g);
    QuadratureSpec qi = q;
    qi.abs_tol = q.abs_tol * 1e-2;
    qi.rel_tol = q.rel_tol * 1e-2;
    double err_inner = 0.0;
    auto integrand = [&](double t) {
        if (t <= 0.0) return 0.0;
        auto d = ddt_s_M(k, rho, t, qi);
        err_inner = std::max(err_inner, d.error);
        return sX(t) * d.value;
    };
    auto r = gauss_kronrod(integrand, std::max(a, 0.0), b, q);
    out.value = r.value;
    out.error = r.error + err_inner * (b - a);
    return out;
}

}  // namespace lvv
