#pragma once

#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "kernels.hpp"
#include "levy.hpp"
#include "stransform.hpp"

namespace lvv {

// ------------------------------------------------------------ smooth test functions

enum class GKind { GaussianBump, DampedPoly, Polynomial };

// G with its first two derivatives and, when it exists, the Fourier transform
// FG(u) = (2 pi)^(-1/2) int G(x) e^(-iux) dx.
struct SmoothTestFunction {
    std::string name;
    GKind kind = GKind::GaussianBump;
    double a = 1.0, m = 0.0, w = 1.0;
    std::vector<double> c;  // polynomial coefficients, ascending

    double G(double x) const { return eval(x, 0); }
    double dG(double x) const { return eval(x, 1); }
    double d2G(double x) const { return eval(x, 2); }
    bool has_fourier() const { return kind != GKind::Polynomial; }
    int degree() const { return kind == GKind::Polynomial ? static_cast<int>(c.size()) - 1 : 0; }

    cplx FG(double u) const {
        double e = std::exp(-0.5 * w * w * u * u);
        if (kind == GKind::GaussianBump) return a * w * e * std::exp(cplx(0.0, -u * m));
        if (kind == GKind::DampedPoly) {
            double w2 = w * w;
            return w * e * cplx(c[0] + c[2] * w2 * (1.0 - w2 * u * u), -c[1] * w2 * u);
        }
        throw std::logic_error("polynomial test functions have no Fourier transform");
    }
    // smallest U with |FG(u)| < cut for all |u| >= U
    double fourier_cutoff(double cut = 1e-10) const {
        if (kind == GKind::GaussianBump) {
            double aw = std::abs(a) * w;
            return aw <= cut ? 0.0 : std::sqrt(2.0 * std::log(aw / cut)) / w;
        }
        auto bound = [&](double u) {
            double w2 = w * w;
            return w * std::exp(-0.5 * w2 * u * u) *
                   (std::abs(c[0]) + std::abs(c[1]) * w2 * u + std::abs(c[2]) * w2 * (1.0 + w2 * u * u));
        };
        double U = 0.0;
        while (bound(U) >= cut) U += 0.05 / w;
        return U;
    }

private:
    double eval(double x, int der) const {
        switch (kind) {
            case GKind::GaussianBump: {
                double z = x - m, w2 = w * w, e = a * std::exp(-0.5 * z * z / w2);
                if (der == 0) return e;
                if (der == 1) return -z / w2 * e;
                return (z * z / (w2 * w2) - 1.0 / w2) * e;
            }
            case GKind::DampedPoly: {
                double w2 = w * w, e = std::exp(-0.5 * x * x / w2);
                double p = c[0] + x * (c[1] + x * c[2]), p1 = c[1] + 2.0 * c[2] * x, p2 = 2.0 * c[2];
                if (der == 0) return p * e;
                if (der == 1) return (p1 - p * x / w2) * e;
                return (p2 - 2.0 * p1 * x / w2 - p / w2 + p * x * x / (w2 * w2)) * e;
            }
            case GKind::Polynomial:
            default: {
                double acc = 0.0;
                for (std::size_t k = c.size(); k-- > static_cast<std::size_t>(der);) {
                    double f = 1.0;
                    for (int j = 0; j < der; ++j) f *= double(k - j);
                    acc = acc * x + f * c[k];
                }
                return acc;
            }
        }
    }
};

inline SmoothTestFunction gaussian_bump(double a, double m, double w) {
    require(w > 0.0, "gaussian bump width must be positive");
    SmoothTestFunction g;
    g.name = "gauss";
    g.kind = GKind::GaussianBump;
    g.a = a;
    g.m = m;
    g.w = w;
    return g;
}

inline SmoothTestFunction damped_poly(double c0, double c1, double c2, double w) {
    require(w > 0.0, "damping width must be positive");
    SmoothTestFunction g;
    g.name = "damped";
    g.kind = GKind::DampedPoly;
    g.c = {c0, c1, c2};
    g.w = w;
    return g;
}

inline SmoothTestFunction polynomial(std::vector<double> coeffs) {
    require(!coeffs.empty(), "polynomial needs at least one coefficient");
    SmoothTestFunction g;
    g.name = "poly";
    g.kind = GKind::Polynomial;
    g.c = std::move(coeffs);
    return g;
}

inline SmoothTestFunction constant_function(double v) {
    auto g = polynomial({v});
    g.name = "const";
    return g;
}

// "gauss:a=1,m=0,w=1", "damped:c0=1,c1=0,c2=0.5,w=1", "poly:c0=0,c1=0,c2=1", "const:c=1"
inline SmoothTestFunction parse_test_function(const std::string& spec) {
    auto colon = spec.find(':');
    std::string kind = spec.substr(0, colon);
    std::map<std::string, double> p;
    if (colon != std::string::npos) {
        std::string rest = spec.substr(colon + 1);
        std::size_t pos = 0;
        while (pos <= rest.size()) {
            auto comma = rest.find(',', pos);
            std::string item = rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            auto eq = item.find('=');
            if (eq == std::string::npos) throw ConfigError("malformed test function parameter '" + item + "'");
            try {
                p[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
            } catch (const std::exception&) {
                throw ConfigError("non-numeric test function parameter '" + item + "'");
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    auto get = [&](const std::string& key, double def) { return p.count(key) ? p.at(key) : def; };
    try {
        SmoothTestFunction g;
        if (kind == "gauss") {
            g = gaussian_bump(get("a", 1.0), get("m", 0.0), get("w", 1.0));
        } else if (kind == "damped") {
            g = damped_poly(get("c0", 1.0), get("c1", 0.0), get("c2", 0.0), get("w", 1.0));
        } else if (kind == "poly") {
            int deg = 0;
            for (auto& [key, v] : p)
                if (key.size() > 1 && key[0] == 'c') deg = std::max(deg, std::stoi(key.substr(1)));
            std::vector<double> c(deg + 1, 0.0);
            for (int i = 0; i <= deg; ++i) c[i] = get("c" + std::to_string(i), 0.0);
            g = polynomial(c);
        } else if (kind == "const") {
            g = constant_function(get("c", 1.0));
        } else {
            throw ConfigError("unknown test function '" + kind + "'");
        }
        g.name = spec;
        return g;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

// ------------------------------------------------------------ characteristic functions

struct CFOptions {
    QuadratureSpec q{};  // q.tail_cutoff is the window length A
    int nu_order = 24;
    int nu_panels = 2;
    int bump_order = 24;
    int bump_panels = 4;
};

// Characteristic function of M(t) under Q_g and its time derivative.
// The nu-integrals use fixed rules; the s-integral is adaptive over the window.
class CFEngine {
public:
    CFEngine(KernelHandle k, const LevyModel& model, TestFunctional g, CFOptions opt = {})
        : k_(std::move(k)), model_(model), rho_(model, g), opt_(opt) {
        validate(rho_.g);
        base_ = make_nu_rule(model.jumps, opt.nu_order, opt.nu_panels);
        base_hi_ = make_nu_rule(model.jumps, 2 * opt.nu_order, opt.nu_panels);
        for (auto& j : rho_.g.jump_terms) {
            bump_.push_back(make_nu_rule(model.jumps, opt.bump_order, opt.bump_panels, j.g1.lo(), j.g1.hi()));
            bump_hi_.push_back(make_nu_rule(model.jumps, 2 * opt.bump_order, opt.bump_panels, j.g1.lo(), j.g1.hi()));
        }
    }

    double window() const { return opt_.q.tail_cutoff; }
    const KernelHandle& kernel() const { return k_; }
    const LevyModel& model() const { return model_; }
    const TestFunctional& functional() const { return rho_.g; }
    const Tilt& tilt() const { return rho_; }
    const CFOptions& options() const { return opt_; }

    // log E^{Q_g} exp(iu M(t))
    QuadResult<cplx> exponent(double t, double u) const {
        require(t >= 0.0, "characteristic function requires t >= 0");
        QuadResult<cplx> out{};
        if (t == 0.0 || u == 0.0) return out;
        auto sm = s_M(k_, rho_, t, opt_.q);
        auto v = l2_norm_sq(k_, t, opt_.q);
        double s2 = model_.sigma * model_.sigma;
        out.value = cplx(-0.5 * s2 * u * u * v.value, u * sm.value);
        out.error = std::abs(u) * sm.error + 0.5 * s2 * u * u * v.error;
        if (has_jumps()) {
            auto J = s_integrate(
                k_, t, window(), [&](double s, double uu) { return inner_psi(u * k_.f3(t, s, uu), s, false); }, opt_.q);
            out.value += J.value;
            out.error += J.error + inner_error(t, [&](double s, double uu, bool hi) {
                             return inner_psi(u * k_.f3(t, s, uu), s, hi);
                         });
        }
        return out;
    }

    QuadResult<cplx> cf(double t, double u) const {
        auto e = exponent(t, u);
        cplx v = std::exp(e.value);
        // |e^(x+d) - e^x| <= |e^x| (e^|d| - 1)
        return {v, std::abs(v) * std::expm1(e.error)};
    }

    // d/dt E^{Q_g} exp(iu M(t))
    QuadResult<cplx> ddt_cf(double t, double u) const {
        require(t > 0.0, "ddt_cf requires t > 0");
        if (u == 0.0) return {};
        auto c = cf(t, u);
        auto dsm = ddt_s_M(k_, rho_, t, opt_.q);
        auto dv = ddt_l2_norm_sq(k_, t, opt_.q);
        double s2 = model_.sigma * model_.sigma;
        cplx de(-0.5 * s2 * u * u * dv.value, u * dsm.value);
        double err = std::abs(u) * dsm.error + 0.5 * s2 * u * u * dv.error;
        if (has_jumps()) {
            double ftt = k_.diag(t);
            if (ftt != 0.0) de += inner_psi(u * ftt, t, false);
            auto body = [&](double s, double uu, bool hi) {
                double df = k_.dt3(t, s, uu);
                if (df == 0.0) return cplx(0.0);
                return cplx(0.0, u * df) * inner_expm1(u * k_.f3(t, s, uu), s, hi);
            };
            auto J = s_integrate(k_, t, window(), [&](double s, double uu) { return body(s, uu, false); }, opt_.q);
            de += J.value;
            err += J.error + inner_error(t, body);
        }
        return {c.value * de, std::abs(c.value) * err + std::abs(de) * c.error};
    }

private:
    bool has_jumps() const { return !std::holds_alternative<NoJumps>(model_.jumps); }

    // int psi(z x) (1 + g*(x,s)) nu(dx), psi(y) = e^(iy) - 1 - iy
    cplx inner_psi(double z, double s, bool hi) const {
        if (z == 0.0) return 0.0;
        const NuRule& b = hi ? base_hi_ : base_;
        cplx acc = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i) acc += b.w[i] * expm1_i_minus_iz(z * b.x[i]);
        for (std::size_t j = 0; j < rho_.g.jump_terms.size(); ++j) {
            auto& jt = rho_.g.jump_terms[j];
            double p = jt.mu * jt.g2(s);
            if (p == 0.0) continue;
            const NuRule& r = hi ? bump_hi_[j] : bump_[j];
            cplx t = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i)
                t += r.w[i] * r.x[i] * jt.g1(r.x[i]) * expm1_i_minus_iz(z * r.x[i]);
            acc += p * t;
        }
        return acc;
    }

    // int x (e^(izx) - 1) (1 + g*(x,s)) nu(dx)
    cplx inner_expm1(double z, double s, bool hi) const {
        if (z == 0.0) return 0.0;
        const NuRule& b = hi ? base_hi_ : base_;
        cplx acc = 0.0;
        for (std::size_t i = 0; i < b.size(); ++i) acc += b.w[i] * b.x[i] * expm1_i(z * b.x[i]);
        for (std::size_t j = 0; j < rho_.g.jump_terms.size(); ++j) {
            auto& jt = rho_.g.jump_terms[j];
            double p = jt.mu * jt.g2(s);
            if (p == 0.0) continue;
            const NuRule& r = hi ? bump_hi_[j] : bump_[j];
            cplx t = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i)
                t += r.w[i] * r.x[i] * r.x[i] * jt.g1(r.x[i]) * expm1_i(z * r.x[i]);
            acc += p * t;
        }
        return acc;
    }

    // fixed-rule estimate of how much the s-integral moves when the nu-rules are doubled
    template <class Body>
    double inner_error(double t, Body&& body) const {
        double err = 0.0;
        for (auto& n : s_nodes(k_, t, window(), 8, 1)) err += n.w * std::abs(body(n.s, n.u, false) - body(n.s, n.u, true));
        return err;
    }

    KernelHandle k_;
    LevyModel model_;
    Tilt rho_;
    CFOptions opt_;
    NuRule base_, base_hi_;
    std::vector<NuRule> bump_, bump_hi_;
};

inline QuadResult<cplx> cf_M(const KernelHandle& k, const LevyModel& model, double t, double u, const CFOptions& opt = {}) {
    return CFEngine(k, model, zero_functional(), opt).cf(t, u);
}

inline QuadResult<cplx> cf_M_Qg(const KernelHandle& k, const LevyModel& model, const TestFunctional& g, double t,
                                double u, const CFOptions& opt = {}) {
    return CFEngine(k, model, g, opt).cf(t, u);
}

inline QuadResult<cplx> ddt_cf_M_Qg(const KernelHandle& k, const LevyModel& model, const TestFunctional& g, double t,
                                    double u, const CFOptions& opt = {}) {
    return CFEngine(k, model, g, opt).ddt_cf(t, u);
}

// ------------------------------------------------------------ S(G(M(t)))

namespace detail {

// (2 pi)^(-1/2) int FG(u) h(u) du over the real line for h(-u) = conj h(u)
template <class H>
QuadResult<double> fourier_pair(const SmoothTestFunction& G, H&& h, const QuadratureSpec& q) {
    double U = G.fourier_cutoff();
    QuadResult<double> out;
    if (U == 0.0) return out;
    double worst = 0.0;
    auto integrand = [&](double u) {
        auto c = h(u);
        worst = std::max(worst, c.error);
        return (G.FG(u) * c.value).real();
    };
    QuadratureSpec qq = q;
    qq.abs_tol = std::max(q.abs_tol, 1e-12);
    qq.rel_tol = std::max(q.rel_tol, 1e-9);
    auto r = gauss_kronrod(integrand, 0.0, U, qq);
    auto absFG = gauss_kronrod([&](double u) { return std::abs(G.FG(u)); }, 0.0, U, qq);
    double scale = 2.0 / std::sqrt(2.0 * pi);
    out.value = scale * r.value;
    // truncation: |FG| < 1e-10 beyond U and decays at least like a Gaussian there
    out.error = scale * (r.error + worst * absFG.value + 1e-10 * std::max(1.0, 1.0 / G.w));
    return out;
}

inline void check_polynomial_route(const SmoothTestFunction& G, const LevyModel& model) {
    if (model.sigma == 0.0)
        throw ConfigError("polynomial G needs a Gaussian component (sigma > 0) for S(G(M(t)))");
    if (G.degree() > 2) throw ConfigError("polynomial G of degree > 2 is not supported for S(G(M(t)))");
}

// jump part of the second cumulant: int int x^2 f^2 (1 + g*) nu ds (and its t-derivative)
inline QuadResult<double> jump_variance(const CFEngine& e, double t, bool derivative) {
    QuadResult<double> out;
    const auto& model = e.model();
    if (std::holds_alternative<NoJumps>(model.jumps)) return out;
    const auto& k = e.kernel();
    const auto& g = e.functional();
    double m2 = nu_moment(model.jumps, 2);
    std::vector<double> m3;
    for (auto& jt : g.jump_terms) m3.push_back(bump_nu_integral(model.jumps, jt.g1, [](double x) { return x * x * x; }));
    auto dens = [&](double s) {
        double acc = m2;
        for (std::size_t j = 0; j < g.jump_terms.size(); ++j) acc += g.jump_terms[j].mu * g.jump_terms[j].g2(s) * m3[j];
        return acc;
    };
    auto r = s_integrate(k, t, e.window(), [&](double s, double u) {
        double f = k.f3(t, s, u);
        return (derivative ? 2.0 * f * k.dt3(t, s, u) : f * f) * dens(s);
    }, e.options().q);
    out = r;
    if (derivative) {
        double ft = k.diag(t);
        out.value += ft * ft * dens(t);
    }
    return out;
}

}  // namespace detail

// S(G(M(t)))(g). Fourier route for bumps and damped polynomials, cumulants for
// polynomials of degree <= 2.
inline QuadResult<double> s_G_of_M(const SmoothTestFunction& G, const CFEngine& e, double t) {
    if (!G.has_fourier()) {
        detail::check_polynomial_route(G, e.model());
        const auto& q = e.options().q;
        auto sm = s_M(e.kernel(), e.tilt(), t, q);
        auto v = l2_norm_sq(e.kernel(), t, q);
        auto jv = detail::jump_variance(e, t, false);
        double s2 = e.model().sigma * e.model().sigma;
        double var = s2 * v.value + jv.value;
        double c0 = G.c[0], c1 = G.c.size() > 1 ? G.c[1] : 0.0, c2 = G.c.size() > 2 ? G.c[2] : 0.0;
        double val = c0 + c1 * sm.value + c2 * (sm.value * sm.value + var);
        double err = (std::abs(c1) + 2.0 * std::abs(c2 * sm.value)) * sm.error + std::abs(c2) * (s2 * v.error + jv.error);
        return {val, err};
    }
    if (t == 0.0) return {G.G(0.0), 0.0};
    return detail::fourier_pair(G, [&](double u) { return e.cf(t, u); }, e.options().q);
}

// d/dt S(G(M(t)))(g)
inline QuadResult<double> ddt_s_G_of_M(const SmoothTestFunction& G, const CFEngine& e, double t) {
    require(t > 0.0, "ddt_s_G_of_M requires t > 0");
    if (!G.has_fourier()) {
        detail::check_polynomial_route(G, e.model());
        const auto& q = e.options().q;
        auto sm = s_M(e.kernel(), e.tilt(), t, q);
        auto dsm = ddt_s_M(e.kernel(), e.tilt(), t, q);
        auto dv = ddt_l2_norm_sq(e.kernel(), t, q);
        auto djv = detail::jump_variance(e, t, true);
        double s2 = e.model().sigma * e.model().sigma;
        double c1 = G.c.size() > 1 ? G.c[1] : 0.0, c2 = G.c.size() > 2 ? G.c[2] : 0.0;
        double val = c1 * dsm.value + c2 * (2.0 * sm.value * dsm.value + s2 * dv.value + djv.value);
        double err = (std::abs(c1) + 2.0 * std::abs(c2 * sm.value)) * dsm.error +
                     2.0 * std::abs(c2 * dsm.value) * sm.error + std::abs(c2) * (s2 * dv.error + djv.error);
        return {val, err};
    }
    return detail::fourier_pair(G, [&](double u) { return e.ddt_cf(t, u); }, e.options().q);
}

inline QuadResult<double> s_G_of_M(const SmoothTestFunction& G, const KernelHandle& k, const LevyModel& model,
                                   const TestFunctional& g, double t, const CFOptions& opt = {}) {
    return s_G_of_M(G, CFEngine(k, model, g, opt), t);
}

inline QuadResult<double> ddt_s_G_of_M(const SmoothTestFunction& G, const KernelHandle& k, const LevyModel& model,
                                       const TestFunctional& g, double t, const CFOptions& opt = {}) {
    return ddt_s_G_of_M(G, CFEngine(k, model, g, opt), t);
}

// lattice of cf values, one row per (t, u)
inline void write_cf_csv(const CFEngine& e, const std::vector<double>& ts, const std::vector<double>& us,
                         std::ostream& os) {
    os << "t,u,re,im,error\n";
    os.precision(17);
    for (double t : ts)
        for (double u : us) {
            auto c = e.cf(t, u);
            os << t << ',' << u << ',' << c.value.real() << ',' << c.value.imag() << ',' << c.error << '\n';
        }
}

}  // namespace lvv
