#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kernels.hpp"
#include "rng.hpp"

namespace lvv {

struct ProbeConfig {
    double T = 1.0;
    double A = 1e3;
    int n_s = 61;  // |s| log-spaced over [s_min, A]
    double s_min = 1e-3;
    int n_t = 64;
    int n_random = 10000;
    std::uint64_t seed = 20261017;
    int continuity_levels = 6;
    double continuity_h0 = 1.0 / 16.0;
    double continuity_span = 2.0;  // s-range below 0 probed for continuity
    std::vector<double> eta_grid{0.01, 0.02, 0.05, 0.1, 0.2};
    std::vector<double> q_offsets{0.01, 0.05, 0.1, 0.2};
    double l2_tol = 1e-12;
    double margin = 0.02;
    double exponent_tol = 0.02;  // fitted exponents within this of 0 count as 0
};

inline void validate(const ProbeConfig& p) {
    require(p.T > 0 && p.A > 1.0 && p.s_min > 0 && p.s_min < 1.0, "probe window invalid");
    require(p.n_s >= 8 && p.n_t >= 4 && p.n_random >= 1 && p.continuity_levels >= 3 && p.continuity_h0 > 0,
            "probe resolutions must be positive");
}

struct ConditionVerdict {
    std::string id;
    std::string name;
    bool passed = false;
    std::string detail;
};

// Numerical evidence (not a proof) for membership in the kernel class.
struct KClassReport {
    std::string label;
    std::vector<ConditionVerdict> conditions;
    double C0 = 0.0, beta = 0.0, gamma = 0.0, theta = inf, eta = 0.0, q = 0.0;
    bool beta_boundary = false;
    double fit_rms = 0.0, theta_fit_rms = 0.0, fd_mismatch = 0.0;
    double tail_exponent = inf, diag_exponent = 0.0, origin_exponent = 0.0;
    bool accepted = false;
    nlohmann::json probe;

    const ConditionVerdict& condition(const std::string& id) const {
        for (auto& c : conditions)
            if (c.id == id) return c;
        throw std::out_of_range("no condition " + id);
    }
    std::vector<std::string> failed() const {
        std::vector<std::string> out;
        for (auto& c : conditions)
            if (!c.passed) out.push_back(c.id);
        return out;
    }

    nlohmann::json to_json() const {
        auto num = [](double v) -> nlohmann::json {
            if (std::isfinite(v)) return v;
            return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
        };
        nlohmann::json j;
        j["label"] = label;
        j["accepted"] = accepted;
        j["evidence_only"] = true;
        for (auto& c : conditions)
            j["conditions"].push_back({{"id", c.id}, {"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
        j["constants"] = {{"C0", num(C0)}, {"beta", num(beta)},    {"gamma", num(gamma)}, {"theta", num(theta)},
                          {"eta", num(eta)}, {"q", num(q)},        {"beta_boundary", beta_boundary}};
        j["diagnostics"] = {{"fit_rms", num(fit_rms)},
                            {"theta_fit_rms", num(theta_fit_rms)},
                            {"fd_mismatch", num(fd_mismatch)},
                            {"ds_tail_exponent", num(tail_exponent)},
                            {"ds_diag_exponent", num(diag_exponent)},
                            {"ds_origin_exponent", num(origin_exponent)}};
        j["probe"] = probe;
        return j;
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "kernel " << label << ": " << (accepted ? "ACCEPTED" : "REJECTED") << " (numerical evidence)\n";
        for (auto& c : conditions)
            os << "  (" << c.id << ") " << (c.passed ? "pass" : "FAIL") << "  " << c.name << ": " << c.detail << "\n";
        os << "  C0=" << C0 << " beta=" << beta << (beta_boundary ? " [boundary beta=0]" : "") << " gamma=" << gamma
           << " theta=" << theta << " eta=" << eta << " q=" << q << "\n";
        return os.str();
    }
};

namespace detail {

// least squares y ~ X b for small dense systems
inline std::vector<double> least_squares(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                                         double* rms = nullptr) {
    std::size_t p = X.empty() ? 0 : X[0].size();
    std::vector<std::vector<double>> N(p, std::vector<double>(p + 1, 0.0));
    for (std::size_t r = 0; r < X.size(); ++r)
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < p; ++j) N[i][j] += X[r][i] * X[r][j];
            N[i][p] += X[r][i] * y[r];
        }
    for (std::size_t c = 0; c < p; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < p; ++r)
            if (std::abs(N[r][c]) > std::abs(N[piv][c])) piv = r;
        std::swap(N[c], N[piv]);
        if (std::abs(N[c][c]) < 1e-300) throw NumericalFailure("degenerate regression in kernel validator");
        for (std::size_t r = 0; r < p; ++r) {
            if (r == c) continue;
            double f = N[r][c] / N[c][c];
            for (std::size_t k = c; k <= p; ++k) N[r][k] -= f * N[c][k];
        }
    }
    std::vector<double> b(p);
    for (std::size_t i = 0; i < p; ++i) b[i] = N[i][p] / N[i][i];
    if (rms) {
        double ss = 0.0;
        for (std::size_t r = 0; r < X.size(); ++r) {
            double pred = 0.0;
            for (std::size_t i = 0; i < p; ++i) pred += X[r][i] * b[i];
            ss += (y[r] - pred) * (y[r] - pred);
        }
        *rms = X.empty() ? 0.0 : std::sqrt(ss / X.size());
    }
    return b;
}

inline std::vector<double> logspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = a * std::pow(b / a, n == 1 ? 0.0 : double(i) / (n - 1));
    return v;
}

// slope of log|v| against log x over points with v != 0; NaN if fewer than 3 points
inline double log_slope(const std::vector<double>& x, const std::vector<double>& v) {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (v[i] != 0.0 && std::isfinite(v[i])) {
            X.push_back({1.0, std::log(x[i])});
            y.push_back(std::log(std::abs(v[i])));
        }
    if (y.size() < 3) return std::numeric_limits<double>::quiet_NaN();
    return least_squares(X, y)[1];
}

}  // namespace detail

inline KClassReport validate_class_K(const KernelHandle& k, const ProbeConfig& pc = {}) {
    validate(pc);
    KClassReport rep;
    rep.label = k.label;
    const double T = pc.T, A = pc.A;
    const double lo = window_start(k, A);
    Xoshiro256 rng(pc.seed);
    auto safe = [&](double v) {
        if (!std::isfinite(v)) throw NumericalFailure("kernel evaluation failed inside the probed region");
        return v;
    };
    auto ts = std::vector<double>(pc.n_t);
    for (int i = 0; i < pc.n_t; ++i) ts[i] = T * (i + 1) / pc.n_t;
    rep.probe = {{"T", T}, {"A", A}, {"n_s", pc.n_s}, {"s_min", pc.s_min}, {"n_t", pc.n_t}, {"n_random", pc.n_random},
                 {"continuity_levels", pc.continuity_levels}, {"continuity_h0", pc.continuity_h0}, {"seed", pc.seed}};

    // (i) Volterra property
    {
        int bad = 0;
        for (int n = 0; n < pc.n_random; ++n) {
            double t = T * rng.uniform();
            double s = t + 2.0 * std::max(T, 1.0) * rng.uniform();
            if (!(s > t)) continue;
            if (safe(k.f3(t, s, t - s)) != 0.0) ++bad;
        }
        rep.conditions.push_back({"i", "f(t,s)=0 for s>t", bad == 0,
                                  std::to_string(bad) + " nonzero values among " + std::to_string(pc.n_random) + " samples"});
    }
    // (ii) f(0,.) = 0 a.e.
    {
        int bad = 0;
        double worst = 0.0;
        for (int n = 0; n < pc.n_random; ++n) {
            double s = n % 2 == 0 ? -A * std::pow(pc.s_min / A, rng.uniform()) : -10.0 + 20.0 * rng.uniform();
            if (s < k.tau) continue;
            double v = std::abs(safe(k.f3(0.0, s, -s)));
            worst = std::max(worst, v);
            if (v > 1e-14) ++bad;
        }
        rep.conditions.push_back({"ii", "f(0,.)=0 a.e.", bad == 0,
                                  "max |f(0,s)| = " + std::to_string(worst) + " over random s"});
    }
    // (iii) continuity on {tau <= s <= t <= T}: oscillation between lattice neighbours under refinement
    {
        double slo = std::max(k.tau, -pc.continuity_span);
        std::vector<double> osc, hs;
        for (int l = 0; l < pc.continuity_levels; ++l) {
            double h = pc.continuity_h0 / std::pow(2.0, l);
            int nt = static_cast<int>(std::llround(T / h));
            int ns = static_cast<int>(std::llround((T - slo) / h));
            double m = 0.0;
            std::vector<double> prev(ns + 1), cur(ns + 1);
            for (int i = 0; i <= nt; ++i) {
                double t = i * h;
                for (int j = 0; j <= ns; ++j) {
                    double s = slo + j * h;
                    double u = t - s;
                    cur[j] = u >= 0.0 ? safe(k.f3(t, s, u)) : std::numeric_limits<double>::quiet_NaN();
                    if (j > 0 && !std::isnan(cur[j]) && !std::isnan(cur[j - 1])) m = std::max(m, std::abs(cur[j] - cur[j - 1]));
                    if (i > 0 && !std::isnan(cur[j]) && !std::isnan(prev[j])) m = std::max(m, std::abs(cur[j] - prev[j]));
                }
                std::swap(prev, cur);
            }
            osc.push_back(m);
            hs.push_back(h);
        }
        double slope = detail::log_slope(hs, osc);
        bool ok = osc.back() <= 1e-12 || (std::isfinite(slope) && slope >= 0.05 && osc.back() < 0.9 * osc.front());
        std::ostringstream d;
        d << "neighbour oscillation " << osc.front() << " -> " << osc.back() << " over " << pc.continuity_levels
          << " halvings, Hoelder slope " << slope;
        rep.conditions.push_back({"iii", "continuity on tau<=s<=t", ok, d.str()});
        rep.probe["continuity_oscillation"] = osc;
    }
    // (iv) support of f(t,.) not a null set
    {
        double minv = inf;
        for (double t : ts) {
            double v = 0.0;
            for (auto& n : s_nodes(k, t, A, 16, 4)) {
                double f = safe(k.f3(t, n.s, n.u));
                v += n.w * f * f;
            }
            minv = std::min(minv, v);
        }
        rep.conditions.push_back({"iv", "f(t,.) not a.e. zero", minv > pc.l2_tol,
                                  "min over probed t of int f^2 ds = " + std::to_string(minv)});
    }
    // (v) derivative bound and past decay
    {
        std::vector<double> sabs = detail::logspace(pc.s_min, A, pc.n_s);
        std::vector<std::vector<double>> X;
        std::vector<double> y;
        std::vector<std::array<double, 3>> pts;
        double fd = 0.0;
        for (double t : ts)
            for (double sa : sabs) {
                double s = -sa;
                if (s < lo) continue;
                double d = safe(k.dt3(t, s, t - s));
                if (d != 0.0) {
                    X.push_back({1.0, std::log(sa), std::log(t - s)});
                    y.push_back(std::log(std::abs(d)));
                    pts.push_back({t, s, std::abs(d)});
                }
                if (sa > 1e-2 && sa < 10.0 && t > 2e-2) {
                    double h = 1e-5;
                    double num = (k.eval(t + h, s) - k.eval(t - h, s)) / (2.0 * h);
                    double scale = std::max(std::abs(d), 1e-8);
                    fd = std::max(fd, std::abs(num - d) / scale);
                }
            }
        rep.fd_mismatch = fd;
        if (y.size() >= 4) {
            auto b = detail::least_squares(X, y, &rep.fit_rms);
            rep.beta = -b[1];
            rep.gamma = -b[2];
            double c0 = 0.0;
            for (auto& p : pts)
                c0 = std::max(c0, p[2] * std::pow(std::abs(p[1]), rep.beta) * std::pow(p[0] - p[1], rep.gamma));
            rep.C0 = c0;
        } else {
            rep.beta = rep.gamma = 0.0;
            rep.C0 = 0.0;
        }
        rep.beta_boundary = std::abs(rep.beta) <= pc.exponent_tol;
        // theta from sup_r |f(r,s)| over s <= -10
        std::vector<double> far = detail::logspace(10.0, A, 21), sup(far.size(), 0.0);
        for (std::size_t i = 0; i < far.size(); ++i) {
            double s = -far[i];
            if (s < lo) continue;
            for (double r : ts) sup[i] = std::max(sup[i], std::abs(safe(k.eval(r, s))));
        }
        bool anyf = std::any_of(sup.begin(), sup.end(), [](double v) { return v != 0.0; });
        if (!anyf) {
            rep.theta = inf;
        } else {
            std::vector<std::vector<double>> Xt;
            std::vector<double> yt;
            for (std::size_t i = 0; i < far.size(); ++i)
                if (sup[i] != 0.0) {
                    Xt.push_back({1.0, std::log(far[i])});
                    yt.push_back(std::log(sup[i]));
                }
            auto bt = detail::least_squares(Xt, yt, &rep.theta_fit_rms);
            rep.theta = -bt[1];
        }
        const double et = pc.exponent_tol;
        bool exps_ok = rep.beta > -et && rep.beta < 1.0 && rep.gamma > -et && rep.gamma < 1.0 &&
                       std::max(rep.beta, 0.0) + std::max(rep.gamma, 0.0) < 1.0;
        double need = std::max(1.0 - std::max(rep.gamma, 0.0) - std::max(rep.beta, 0.0), 0.5);
        bool theta_ok = rep.theta > need + pc.margin;
        bool fd_ok = fd <= 1e-3;
        std::ostringstream d;
        d << "fit beta=" << rep.beta << " gamma=" << rep.gamma << " C0=" << rep.C0 << " (rms " << rep.fit_rms
          << "), theta=" << rep.theta << " vs required > " << need << ", d/dt consistency " << fd;
        if (!exps_ok) d << "; exponent constraint violated";
        if (!theta_ok) d << "; past decay too slow";
        if (!fd_ok) d << "; d/dt evaluator disagrees with finite differences";
        if (rep.beta_boundary && y.size() >= 4) d << "; beta at the boundary value 0";
        rep.conditions.push_back({"v", "derivative bound and decay", exps_ok && theta_ok && fd_ok, d.str()});
    }
    // (vi) integrability of |df/ds|^(1+eta) (|s|^q v 1)
    {
        std::vector<double> tprobe;
        for (int i = 1; i <= 8; ++i) tprobe.push_back(T * i / 8.0);
        std::vector<double> far = detail::logspace(10.0, A, 21), small = detail::logspace(1e-8, 1e-3, 21);
        double a = inf, b = 0.0, c = 0.0;
        for (double t : tprobe) {
            std::vector<double> v(far.size());
            for (std::size_t i = 0; i < far.size(); ++i) v[i] = -far[i] >= lo ? safe(k.ds3(t, -far[i], t + far[i])) : 0.0;
            double sl = detail::log_slope(far, v);
            if (std::isfinite(sl)) a = std::min(a, -sl);
            for (std::size_t i = 0; i < small.size(); ++i) {
                double s = t - small[i];
                v[i] = s >= lo ? safe(k.ds3(t, s, small[i])) : 0.0;
            }
            sl = detail::log_slope(small, v);
            if (std::isfinite(sl)) b = std::max(b, -sl);
            for (double sg : {-1.0, 1.0}) {
                for (std::size_t i = 0; i < small.size(); ++i) {
                    double s = sg * small[i];
                    v[i] = (s >= lo && s < t) ? safe(k.ds3(t, s, t - s)) : 0.0;
                }
                sl = detail::log_slope(small, v);
                if (std::isfinite(sl)) c = std::max(c, -sl);
            }
        }
        rep.tail_exponent = a;
        rep.diag_exponent = b;
        rep.origin_exponent = c;
        bool found = false;
        for (double eta : pc.eta_grid) {
            for (double off : pc.q_offsets) {
                double q = 0.5 + 2.5 * eta + off;
                bool ok = b * (1.0 + eta) < 1.0 - pc.margin && c * (1.0 + eta) < 1.0 - pc.margin &&
                          (a == inf || a * (1.0 + eta) - q > 1.0 + pc.margin);
                if (ok) {
                    rep.eta = eta;
                    rep.q = q;
                    found = true;
                    break;
                }
            }
            if (found) break;
        }
        std::ostringstream d;
        d << "local exponents of |df/ds|: past " << a << ", diagonal " << b << ", origin " << c;
        if (found) {
            double sup = 0.0;
            for (double t : tprobe) {
                double v = 0.0;
                for (auto& n : s_nodes(k, t, A, 16, 4)) {
                    double g = std::abs(safe(k.ds3(t, n.s, n.u)));
                    if (g > 0.0) v += n.w * std::pow(g, 1.0 + rep.eta) * std::max(std::pow(std::abs(n.s), rep.q), 1.0);
                }
                sup = std::max(sup, v);
            }
            d << "; eta=" << rep.eta << " q=" << rep.q << " gives sup_t integral " << sup << " on the window";
        } else {
            d << "; no (eta,q) candidate makes the integral finite";
        }
        rep.conditions.push_back({"vi", "absolute continuity in s", found, d.str()});
    }
    rep.accepted = std::all_of(rep.conditions.begin(), rep.conditions.end(), [](auto& c) { return c.passed; });
    return rep;
}

}  // namespace lvv
