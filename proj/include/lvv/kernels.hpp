#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "common.hpp"
#include "quadrature.hpp"

namespace lvv {

// Evaluation contract for a Volterra kernel f(t,s).
// Evaluators receive (t, s, u) with u = t - s passed exactly by the caller, so
// kernels with power behaviour at the diagonal keep full relative accuracy there.
struct KernelHandle {
    using Fn3 = std::function<double(double, double, double)>;

    std::string label;
    double tau = -inf;  // support start
    Fn3 f3, dt3, ds3;
    // optional closed form of int_a^b f(t,s) ds for a < b <= t
    Fn3 integral;
    // |df/dt| ~ |t-s|^-diag_exponent near the diagonal, ~ |s|^-origin_exponent near 0
    double diag_exponent = 0.0;
    double origin_exponent = 0.0;
    // power substitutions used by the s-quadrature near the diagonal and near s = 0
    double diag_grading = 1.0;
    double origin_grading = 1.0;
    // |f(r,s)| ~ |s|^-decay as s -> -inf (NaN when unknown)
    double decay = std::numeric_limits<double>::quiet_NaN();

    double operator()(double t, double s) const { return f3(t, s, t - s); }
    double eval(double t, double s) const { return f3(t, s, t - s); }
    double eval_dt(double t, double s) const { return dt3(t, s, t - s); }
    double eval_ds(double t, double s) const { return ds3(t, s, t - s); }
    double diag(double t) const { return f3(t, t, 0.0); }
};

namespace detail {
inline double ppow(double x, double d) { return x > 0.0 ? std::pow(x, d) : 0.0; }
}  // namespace detail

// Mandelbrot-Van Ness kernel ((t-s)_+^d - (-s)_+^d) / Gamma(d+1), 0 < d < 1/2.
inline KernelHandle frac_kernel(double d) {
    if (!(d > 0.0 && d < 0.5)) throw std::invalid_argument("fractional kernel requires 0 < d < 1/2");
    const double g1 = std::tgamma(d + 1.0), g2 = std::tgamma(d + 2.0);
    KernelHandle k;
    k.label = "frac:d=" + std::to_string(d);
    k.tau = -inf;
    k.f3 = [d, g1](double, double s, double u) {
        if (u < 0.0) return 0.0;
        return (detail::ppow(u, d) - detail::ppow(-s, d)) / g1;
    };
    k.dt3 = [d, g1](double, double, double u) { return u > 0.0 ? d * std::pow(u, d - 1.0) / g1 : 0.0; };
    k.ds3 = [d, g1](double, double s, double u) {
        if (u <= 0.0) return 0.0;
        return d * (detail::ppow(-s, d - 1.0) * (s < 0.0) - std::pow(u, d - 1.0)) / g1;
    };
    k.integral = [d, g2](double t, double a, double b) {
        b = std::min(b, t);
        if (!(b > a)) return 0.0;
        double e = d + 1.0;
        return ((detail::ppow(t - a, e) - detail::ppow(t - b, e)) - (detail::ppow(-a, e) - detail::ppow(-b, e))) / g2;
    };
    k.diag_exponent = 1.0 - d;
    k.origin_exponent = 0.0;
    k.diag_grading = 1.0 / d;
    k.origin_grading = 1.0 / d;
    k.decay = 1.0 - d;
    return k;
}

// f(t,s) = 1 for 0 <= s <= t; M coincides with L.
inline KernelHandle indicator_kernel() {
    KernelHandle k;
    k.label = "indicator";
    k.tau = 0.0;
    k.f3 = [](double, double s, double u) { return (s >= 0.0 && u >= 0.0) ? 1.0 : 0.0; };
    k.dt3 = [](double, double, double) { return 0.0; };
    k.ds3 = [](double, double, double) { return 0.0; };
    k.integral = [](double t, double a, double b) {
        double lo = std::max(a, 0.0), hi = std::min(b, t);
        return hi > lo ? hi - lo : 0.0;
    };
    return k;
}

// Kernels that break one condition family each; used to exercise the validator.
inline KernelHandle shifted_indicator_kernel() {
    KernelHandle k;
    k.label = "shifted-indicator";
    k.tau = 0.0;
    k.f3 = [](double, double s, double u) { return (s >= 0.0 && u >= -1.0) ? 1.0 : 0.0; };
    k.dt3 = [](double, double, double) { return 0.0; };
    k.ds3 = [](double, double, double) { return 0.0; };
    return k;
}

inline KernelHandle zero_kernel() {
    KernelHandle k;
    k.label = "zero";
    k.tau = 0.0;
    k.f3 = [](double, double, double) { return 0.0; };
    k.dt3 = k.f3;
    k.ds3 = k.f3;
    return k;
}

// t (1+|s|)^-0.4 on s <= t: decays too slowly into the past
inline KernelHandle slow_decay_kernel(double rate = 0.4) {
    KernelHandle k;
    k.label = "slow-decay";
    k.tau = -inf;
    k.f3 = [rate](double t, double s, double u) { return u >= 0.0 ? t * std::pow(1.0 + std::abs(s), -rate) : 0.0; };
    k.dt3 = [rate](double, double s, double u) { return u > 0.0 ? std::pow(1.0 + std::abs(s), -rate) : 0.0; };
    k.ds3 = [rate](double t, double s, double u) {
        if (u <= 0.0) return 0.0;
        double sg = s < 0.0 ? 1.0 : -1.0;
        return sg * rate * t * std::pow(1.0 + std::abs(s), -rate - 1.0);
    };
    k.decay = rate;
    return k;
}

// Kernel registry used by configuration files: "frac:d=0.25", "indicator", ...
inline KernelHandle make_kernel(const std::string& name, const std::map<std::string, double>& params = {}) {
    auto get = [&](const std::string& key, double def) {
        auto it = params.find(key);
        return it == params.end() ? def : it->second;
    };
    if (name == "frac" || name == "fractional") return frac_kernel(get("d", 0.25));
    if (name == "indicator") return indicator_kernel();
    if (name == "shifted-indicator") return shifted_indicator_kernel();
    if (name == "zero") return zero_kernel();
    if (name == "slow-decay") return slow_decay_kernel(get("rate", 0.4));
    throw ConfigError("unknown kernel '" + name + "'");
}

// "frac:d=0.25" -> make_kernel("frac", {d: 0.25})
inline KernelHandle parse_kernel(const std::string& spec) {
    auto colon = spec.find(':');
    std::string name = spec.substr(0, colon);
    std::map<std::string, double> params;
    if (colon != std::string::npos) {
        std::string rest = spec.substr(colon + 1);
        std::size_t pos = 0;
        while (pos < rest.size()) {
            auto comma = rest.find(',', pos);
            std::string kv = rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("kernel parameter '" + kv + "' is not key=value");
            try {
                params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
            } catch (const std::exception&) {
                throw ConfigError("kernel parameter '" + kv + "' is not numeric");
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    return make_kernel(name, params);
}

// ------------------------------------------------------------ s-quadrature

// The window [max(tau,-A), t] is split into pieces, each parametrised by y in [0,1]:
//   Far  : s = -r, r = e^v log-uniform over [1, -lo]
//   Neg  : s = -R y^p            (graded toward s = 0 from the left)
//   Pos  : s = a + (m-a) y^p     (graded toward s = 0 from the right)
//   Diag : u = (t-m) y^p, s = t-u (graded toward the diagonal, u kept exact)
enum class PieceKind { Far, Neg, Pos, Diag };

struct SPiece {
    PieceKind kind;
    double a, b, p;
};

struct SNode {
    double s, u, w;
};

inline double window_start(const KernelHandle& k, double A) { return std::max(k.tau, -A); }

inline std::vector<SPiece> s_pieces(const KernelHandle& k, double t, double A, double t_max = -1.0) {
    // t_max lets callers integrate over s <= t_max with t fixed (t_max <= t)
    double top = t_max < 0.0 ? t : t_max;
    std::vector<SPiece> out;
    double lo = window_start(k, A);
    if (!(top > lo)) return out;
    if (lo < -1.0) out.push_back({PieceKind::Far, 1.0, -lo, 1.0});
    if (lo < 0.0) out.push_back({PieceKind::Neg, 0.0, std::min(1.0, -lo), k.origin_grading});
    if (top > 0.0) {
        double a = std::max(lo, 0.0);
        if (top < t) {
            out.push_back({PieceKind::Pos, a, top, a == 0.0 ? k.origin_grading : 1.0});
        } else {
            double m = a + 0.5 * (t - a);
            out.push_back({PieceKind::Pos, a, m, a == 0.0 ? k.origin_grading : 1.0});
            out.push_back({PieceKind::Diag, m, t, k.diag_grading});
        }
    }
    return out;
}

// maps y in (0,1) to (s, u, ds/dy)
inline SNode map_piece(const SPiece& pc, double t, double y) {
    switch (pc.kind) {
        case PieceKind::Far: {
            double L = std::log(pc.b / pc.a);
            double r = pc.a * std::exp(y * L);
            return {-r, t + r, r * L};
        }
        case PieceKind::Neg: {
            double yp = std::pow(y, pc.p);
            double r = pc.b * yp;
            return {-r, t + r, pc.b * pc.p * yp / y};
        }
        case PieceKind::Pos: {
            double yp = std::pow(y, pc.p);
            double s = pc.a + (pc.b - pc.a) * yp;
            return {s, t - s, (pc.b - pc.a) * pc.p * yp / y};
        }
        case PieceKind::Diag:
        default: {
            double yp = std::pow(y, pc.p);
            double u = (t - pc.a) * yp;
            return {t - u, u, (t - pc.a) * pc.p * yp / y};
        }
    }
}

// Fixed composite Gauss-Legendre nodes over the window for the integral in s at time t.
inline std::vector<SNode> s_nodes(const KernelHandle& k, double t, double A, int order, int panels,
                                  double t_max = -1.0) {
    std::vector<SNode> out;
    for (auto& pc : s_pieces(k, t, A, t_max)) {
        int np = panels;
        if (pc.kind == PieceKind::Far) np = std::max(panels, static_cast<int>(std::ceil(std::log(pc.b / pc.a))));
        Rule y = gl_rule(0.0, 1.0, np, order);
        for (std::size_t i = 0; i < y.size(); ++i) {
            SNode n = map_piece(pc, t, y.x[i]);
            out.push_back({n.s, n.u, n.w * y.w[i]});
        }
    }
    return out;
}

// Adaptive integral over the window of h(s, u), u = t - s.
template <class H>
auto s_integrate(const KernelHandle& k, double t, double A, H&& h, const QuadratureSpec& q, double t_max = -1.0)
    -> QuadResult<std::invoke_result_t<H&, double, double>> {
    using V = std::invoke_result_t<H&, double, double>;
    QuadResult<V> out{};
    auto pieces = s_pieces(k, t, A, t_max);
    if (pieces.empty()) return out;
    double abs_each = q.abs_tol / pieces.size();
    for (auto& pc : pieces) {
        auto g = [&](double y) {
            SNode n = map_piece(pc, t, y);
            return h(n.s, n.u) * n.w;
        };
        auto r = gauss_kronrod(g, 0.0, 1.0, abs_each, q.rel_tol, q.max_subdivisions);
        out.value += r.value;
        out.error += r.error;
    }
    return out;
}

// value over the window, its quadrature error, and an estimate of the truncated tail
struct WindowedIntegral {
    double value = 0.0;
    double error = 0.0;
    double tail = 0.0;
};

// Decay exponent of |f(t,s)| as s -> -inf fitted on [A, 10A] when the handle has no hint.
inline double fitted_decay(const KernelHandle& k, double t, double A) {
    if (std::isfinite(k.decay)) return k.decay;
    double s1 = -A, s2 = -10.0 * A;
    double f1 = std::abs(k.eval(t, s1)), f2 = std::abs(k.eval(t, s2));
    if (f1 == 0.0 || f2 == 0.0) return inf;
    return -std::log(f2 / f1) / std::log(10.0);
}

// Estimate of int_{-inf}^{-A} |h(s)| ds for |h| ~ C |s|^-p, with C from samples at -A .. -8A.
template <class H>
double power_tail(H&& h, double A, double p) {
    if (!(p > 1.0)) return inf;
    double C = 0.0;
    for (double m : {1.0, 2.0, 4.0, 8.0}) C = std::max(C, std::abs(h(-m * A)) * std::pow(m * A, p));
    return C * std::pow(A, 1.0 - p) / (p - 1.0);
}

// int_{max(tau,-A)}^t f(t,s)^2 ds with tail estimate (A = q.tail_cutoff)
inline WindowedIntegral l2_norm_sq(const KernelHandle& k, double t, const QuadratureSpec& q = {}) {
    require(t >= 0.0, "l2_norm_sq requires t >= 0");
    WindowedIntegral out;
    if (t == 0.0) return out;
    double A = q.tail_cutoff;
    auto r = s_integrate(k, t, A, [&](double s, double u) { double v = k.f3(t, s, u); return v * v; }, q);
    out.value = r.value;
    out.error = r.error;
    if (k.tau < -A) {
        double th = fitted_decay(k, t, A);
        out.tail = power_tail([&](double s) { double v = k.eval(t, s); return v * v; }, A, 2.0 * th);
    }
    return out;
}

// f(t,t)^2 + 2 int df/dt(t,s) f(t,s) ds
inline WindowedIntegral ddt_l2_norm_sq(const KernelHandle& k, double t, const QuadratureSpec& q = {}) {
    require(t > 0.0, "ddt_l2_norm_sq requires t > 0");
    if (k.diag_exponent >= 1.0) throw std::invalid_argument("derivative singularity not integrable");
    WindowedIntegral out;
    double A = q.tail_cutoff;
    auto r = s_integrate(k, t, A, [&](double s, double u) { return k.dt3(t, s, u) * k.f3(t, s, u); }, q);
    double ft = k.diag(t);
    out.value = ft * ft + 2.0 * r.value;
    out.error = 2.0 * r.error;
    if (k.tau < -A) {
        double th = fitted_decay(k, t, A);
        out.tail = 2.0 * power_tail([&](double s) { return k.eval_dt(t, s) * k.eval(t, s); }, A, 2.0 * th);
    }
    return out;
}

}  // namespace lvv
