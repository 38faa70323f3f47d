#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <queue>
#include <type_traits>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "common.hpp"

namespace lvv {

struct QuadratureSpec {
    double abs_tol = 1e-12;
    double rel_tol = 1e-10;
    int max_subdivisions = 4000;
    double tail_cutoff = 100.0;
    // exponents (beta, gamma) of a bound C|s|^-beta |b-s|^-gamma
    std::optional<std::pair<double, double>> singularity_exponents;
    // fixed composite rules used for repeated kernel integrals
    int order = 16;
    int panels = 2;
};

inline void validate(const QuadratureSpec& q) {
    require(q.abs_tol > 0 && q.rel_tol > 0, "quadrature tolerances must be positive");
    require(q.tail_cutoff > 0, "tail cutoff must be positive");
    require(q.max_subdivisions >= 1, "max_subdivisions must be >= 1");
    require(q.order >= 2 && q.panels >= 1, "fixed rule order/panels too small");
}

// Blow-up exponents: integrand ~ |x-p|^-alpha near a, b and 0.
struct SingularHints {
    double at_a = 0.0;
    double at_b = 0.0;
    double at_zero = 0.0;
};

// ---------------------------------------------------------------- fixed rules

struct Rule {
    std::vector<double> x, w;

    std::size_t size() const { return x.size(); }
    void append(const Rule& o) {
        x.insert(x.end(), o.x.begin(), o.x.end());
        w.insert(w.end(), o.w.begin(), o.w.end());
    }
    template <class F>
    auto apply(F&& f) const {
        using V = std::invoke_result_t<F&, double>;
        V acc{};
        for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * f(x[i]);
        return acc;
    }
};

// Gauss-Legendre nodes and weights on [-1,1].
inline Rule gauss_legendre(int n) {
    require(n >= 1, "Gauss-Legendre order must be >= 1");
    Rule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= n; ++k) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= n; ++k) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
        }
        r.x[i] = -z;
        r.x[n - 1 - i] = z;
        r.w[i] = r.w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    if (n % 2 == 1) r.x[n / 2] = 0.0;
    return r;
}

inline Rule gl_rule(double a, double b, int panels, int order) {
    Rule base = gauss_legendre(order);
    Rule r;
    double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        double lo = a + p * h, c = lo + 0.5 * h;
        for (int i = 0; i < order; ++i) {
            r.x.push_back(c + 0.5 * h * base.x[i]);
            r.w.push_back(0.5 * h * base.w[i]);
        }
    }
    return r;
}

// Rule on [a,b] graded toward a through x = a + (b-a) y^p.
inline Rule power_rule(double a, double b, double p, int panels, int order) {
    Rule y = gl_rule(0.0, 1.0, panels, order);
    Rule r;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double yp = std::pow(y.x[i], p);
        r.x.push_back(a + (b - a) * yp);
        r.w.push_back((b - a) * p * yp / y.x[i] * y.w[i]);
    }
    return r;
}

// Rule for r in [r0, r1], 0 < r0 < r1, using r = e^v with panels of width <= max_width in v.
inline Rule log_rule(double r0, double r1, int order, double max_width = 1.0) {
    double v0 = std::log(r0), v1 = std::log(r1);
    int panels = std::max(1, static_cast<int>(std::ceil((v1 - v0) / max_width)));
    Rule v = gl_rule(v0, v1, panels, order);
    Rule r;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double e = std::exp(v.x[i]);
        r.x.push_back(e);
        r.w.push_back(e * v.w[i]);
    }
    return r;
}

// ------------------------------------------------------- adaptive Gauss-Kronrod

namespace detail {

inline constexpr double xgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                  0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                  0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                  0.207784955007898467600689403773245, 0.0};
inline constexpr double wgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                  0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                  0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                  0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double wg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                 0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class V>
struct Segment {
    double a, b;
    V value;
    double error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

template <class V, class F>
Segment<V> gk15(F& f, double a, double b) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    V f1[7], f2[7];
    V fc = f(c);
    V resk = fc * wgk[7];
    V resg = fc * wg[3];
    double resabs = std::abs(resk);
    for (int j = 0; j < 7; ++j) {
        double dx = h * xgk[j];
        f1[j] = f(c - dx);
        f2[j] = f(c + dx);
        resk += wgk[j] * (f1[j] + f2[j]);
        if (j % 2 == 1) resg += wg[j / 2] * (f1[j] + f2[j]);
        resabs += wgk[j] * (magnitude(f1[j]) + magnitude(f2[j]));
    }
    V reskh = resk * 0.5;
    double resasc = wgk[7] * magnitude(fc - reskh);
    for (int j = 0; j < 7; ++j) resasc += wgk[j] * (magnitude(f1[j] - reskh) + magnitude(f2[j] - reskh));
    V result = resk * h;
    resabs *= std::abs(h);
    resasc *= std::abs(h);
    double err = magnitude((resk - resg) * h);
    if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) err = std::max(50.0 * eps * resabs, err);
    if (!std::isfinite(magnitude(result))) throw NumericalFailure("non-finite integrand value in quadrature");
    return {a, b, result, err};
}

}  // namespace detail

// Adaptive G7/K15 on [a,b]; complex integrands share one subdivision tree.
template <class F>
auto gauss_kronrod(F&& f, double a, double b, double abs_tol, double rel_tol, int max_subdivisions)
    -> QuadResult<std::invoke_result_t<F&, double>> {
    using V = std::invoke_result_t<F&, double>;
    if (a == b) return {V{}, 0.0};
    std::priority_queue<detail::Segment<V>> heap;
    auto first = detail::gk15<V>(f, a, b);
    V total = first.value;
    double err = first.error;
    heap.push(first);
    int n = 1;
    while (err > std::max(abs_tol, rel_tol * magnitude(total))) {
        if (n >= max_subdivisions)
            throw NumericalFailure("quadrature did not converge within max_subdivisions (error " +
                                   std::to_string(err) + ")");
        auto worst = heap.top();
        heap.pop();
        double m = 0.5 * (worst.a + worst.b);
        if (!(m > worst.a && m < worst.b)) throw NumericalFailure("quadrature interval collapsed");
        auto l = detail::gk15<V>(f, worst.a, m);
        auto r = detail::gk15<V>(f, m, worst.b);
        heap.push(l);
        heap.push(r);
        ++n;
        total += (l.value + r.value) - worst.value;
        err += (l.error + r.error) - worst.error;
        if (n % 64 == 0 || err <= std::max(abs_tol, rel_tol * magnitude(total))) {
            // resum from the tree to avoid drift
            total = V{};
            err = 0.0;
            auto copy = heap;
            while (!copy.empty()) {
                total += copy.top().value;
                err += copy.top().error;
                copy.pop();
            }
        }
    }
    return {total, err};
}

template <class F>
auto gauss_kronrod(F&& f, double a, double b, const QuadratureSpec& q) {
    return gauss_kronrod(std::forward<F>(f), a, b, q.abs_tol, q.rel_tol, q.max_subdivisions);
}

namespace detail {

// one-sided power substitution on [l,r]; singular end at l (left=true) or r
template <class F>
auto substituted(F& h, double l, double r, double alpha, bool left, double abs_tol, const QuadratureSpec& q) {
    require(alpha < 1.0, "singularity exponent must be < 1 for integrability");
    double p = alpha > 0.0 ? 1.0 / (1.0 - alpha) : 1.0;
    double len = r - l;
    double e = left ? l : r, dir = left ? 1.0 : -1.0;
    // near a nonzero endpoint x cannot resolve distances below a few ulps, so the last
    // stretch [e, e + u*] is closed with a local power law fitted from two samples
    double ustar = (alpha > 0.0 && e != 0.0) ? 1e6 * std::numeric_limits<double>::epsilon() * std::abs(e) : 0.0;
    if (ustar > 1e-3 * len) ustar = 0.0;
    double y0 = ustar > 0.0 ? std::pow(ustar / len, 1.0 / p) : 0.0;
    auto g = [&](double y) {
        double yp = std::pow(y, p);
        double x = e + dir * len * yp;
        if (x == e) x = std::nextafter(e, e + dir);
        double jac = p == 1.0 ? len : len * p * yp / y;
        return h(x) * jac;
    };
    auto res = gauss_kronrod(g, y0, 1.0, abs_tol, q.rel_tol, q.max_subdivisions);
    if (ustar > 0.0) {
        auto h1 = h(e + dir * ustar);
        auto h2 = h(e + dir * 4.0 * ustar);
        double m1 = magnitude(h1), m2 = magnitude(h2);
        double a_loc = (m1 > 0.0 && m2 > 0.0) ? std::clamp(std::log(m1 / m2) / std::log(4.0), 0.0, 0.999) : alpha;
        auto tail = h1 * (ustar / (1.0 - a_loc));
        res.value += tail;
        res.error += magnitude(tail) * (1e-5 + 4.0 * ustar / len);
    }
    return res;
}

}  // namespace detail

// Integral of h over [a,b] with power singularities at a, b and (if inside) 0.
// With hints: power substitution u = (b-s)^(1-gamma) style per piece, adaptive G7/K15.
// Without hints: tanh-sinh.
template <class F>
auto integrate_singular(F&& h, double a, double b, const QuadratureSpec& q,
                        std::optional<SingularHints> hints = std::nullopt)
    -> QuadResult<std::invoke_result_t<F&, double>> {
    using V = std::invoke_result_t<F&, double>;
    require(a < b, "integrate_singular requires a < b");
    if (!hints && q.singularity_exponents) {
        auto [beta, gamma] = *q.singularity_exponents;
        hints = SingularHints{a == 0.0 ? beta : 0.0, gamma, beta};
    }
    if (!hints) {
        // probe the endpoints for power blow-up; if found, use the substitution path with padded exponents
        double len = b - a;
        auto probe = [&](double e, double dir) {
            double h1 = magnitude(V(h(e + dir * 1e-8 * len))), h2 = magnitude(V(h(e + dir * 1e-6 * len)));
            if (!std::isfinite(h1) || !std::isfinite(h2) || h2 <= 0.0 || h1 <= 0.0) return 0.0;
            double alpha = std::log(h1 / h2) / std::log(100.0);
            return alpha > 0.02 ? std::min(alpha + 0.02, 0.99) : 0.0;
        };
        SingularHints guess{probe(a, 1.0), probe(b, -1.0), 0.0};
        if (a < 0.0 && b > 0.0) guess.at_zero = std::max(probe(0.0, -1.0), probe(0.0, 1.0));
        if (guess.at_a > 0.0 || guess.at_b > 0.0 || guess.at_zero > 0.0) return integrate_singular(h, a, b, q, guess);
        boost::math::quadrature::tanh_sinh<double> ts(15);
        double err = 0.0, l1 = 0.0;
        std::size_t levels = 0;
        V val = ts.integrate(h, a, b, q.rel_tol, &err, &l1, &levels);
        if (!std::isfinite(magnitude(val))) throw NumericalFailure("tanh-sinh produced a non-finite value");
        // the level-difference estimate can be optimistic; floor it by roundoff in the L1 norm
        double bound = std::max(err, 64.0 * std::numeric_limits<double>::epsilon() * l1);
        // abscissae cannot get closer to a nonzero endpoint than a few ulps; add the mass lost there
        auto endpoint_mass = [&](double e, double dir) {
            if (e == 0.0) return 0.0;
            double d1 = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(e);
            double h1 = magnitude(V(h(e + dir * d1))), h2 = magnitude(V(h(e + dir * 16.0 * d1)));
            if (!std::isfinite(h1) || !std::isfinite(h2)) return inf;
            if (h1 <= 0.0) return 0.0;
            double alpha = h2 > 0.0 ? std::log(h1 / h2) / std::log(16.0) : 0.0;
            alpha = std::max(alpha, 0.0);
            if (alpha >= 1.0) return inf;
            return h1 * d1 / (1.0 - alpha);
        };
        bound += endpoint_mass(a, 1.0) + endpoint_mass(b, -1.0);
        if (bound > std::max(q.abs_tol, q.rel_tol * magnitude(val)) * 100.0)
            throw NumericalFailure("tanh-sinh did not reach the requested tolerance");
        return {val, bound};
    }
    struct Piece {
        double l, r, al, ar;
    };
    std::vector<Piece> pieces;
    if (a < 0.0 && b > 0.0) {
        pieces.push_back({a, 0.0, hints->at_a, hints->at_zero});
        pieces.push_back({0.0, b, hints->at_zero, hints->at_b});
    } else {
        double al = a == 0.0 ? std::max(hints->at_a, hints->at_zero) : hints->at_a;
        double ar = b == 0.0 ? std::max(hints->at_b, hints->at_zero) : hints->at_b;
        pieces.push_back({a, b, al, ar});
    }
    QuadResult<V> out{};
    std::size_t nsub = 0;
    for (auto& pc : pieces) nsub += (pc.al > 0.0 && pc.ar > 0.0) ? 2 : 1;
    double abs_each = q.abs_tol / nsub;
    for (auto& pc : pieces) {
        std::vector<QuadResult<V>> parts;
        if (pc.al > 0.0 && pc.ar > 0.0) {
            double m = 0.5 * (pc.l + pc.r);
            parts.push_back(detail::substituted(h, pc.l, m, pc.al, true, abs_each, q));
            parts.push_back(detail::substituted(h, m, pc.r, pc.ar, false, abs_each, q));
        } else if (pc.ar > 0.0) {
            parts.push_back(detail::substituted(h, pc.l, pc.r, pc.ar, false, abs_each, q));
        } else {
            parts.push_back(detail::substituted(h, pc.l, pc.r, pc.al, true, abs_each, q));
        }
        for (auto& p : parts) {
            out.value += p.value;
            out.error += p.error;
        }
    }
    return out;
}

// Integral of h over (-inf, b] where |h(s)| decays like |s|^-decay, decay > 1.
// The head [-A, b] goes through integrate_singular; the tail is mapped to (0,1]
// by s = -c y^(-1/(decay-1)), which turns the assumed power decay into a bounded integrand.
template <class F>
auto integrate_tail(F&& h, double b, double decay, const QuadratureSpec& q,
                    std::optional<SingularHints> hints = std::nullopt)
    -> QuadResult<std::invoke_result_t<F&, double>> {
    using V = std::invoke_result_t<F&, double>;
    if (!(decay > 1.0)) throw std::invalid_argument("integrand decays too slowly for an improper integral");
    double A = q.tail_cutoff;
    QuadResult<V> out{};
    double c;
    if (b > -A) {
        out = integrate_singular(h, -A, b, q, hints);
        c = A;
    } else {
        c = -b;
    }
    double k = 1.0 / (decay - 1.0);
    auto g = [&](double y) {
        double s = -c * std::pow(y, -k);
        return h(s) * (c * k * std::pow(y, -k - 1.0));
    };
    auto t = gauss_kronrod(g, 0.0, 1.0, q.abs_tol, q.rel_tol, q.max_subdivisions);
    out.value += t.value;
    out.error += t.error;
    return out;
}

}  // namespace lvv
