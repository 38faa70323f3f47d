#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "common.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace lvv {

// ------------------------------------------------------------------ jump laws

struct Atom {
    double x;
    double p;
};
struct AtomLaw {
    std::vector<Atom> atoms;
};
struct UniformLaw {
    double lo, hi;
};
// symmetric Pareto: density proportional to |x|^(-1-tail) on |x| >= xmin
struct ParetoLaw {
    double xmin, tail;
};

struct NoJumps {};
struct CompoundPoisson {
    double rate;
    std::variant<AtomLaw, UniformLaw, ParetoLaw> law;
};
// symmetric tempered stable: nu(dx) = c e^{-lambda|x|} |x|^{-1-alpha} dx
struct TemperedStable {
    double alpha, lambda, c;
};

using JumpSpec = std::variant<NoJumps, CompoundPoisson, TemperedStable>;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline void validate(const JumpSpec& js) {
    std::visit(overloaded{
                   [](const NoJumps&) {},
                   [](const CompoundPoisson& cp) {
                       require(cp.rate > 0 && std::isfinite(cp.rate), "compound Poisson rate must be positive");
                       std::visit(overloaded{
                                      [](const AtomLaw& a) {
                                          require(!a.atoms.empty(), "atom law needs at least one atom");
                                          double tot = 0.0;
                                          for (auto& at : a.atoms) {
                                              require(at.x != 0.0 && std::isfinite(at.x), "atoms must be nonzero");
                                              require(at.p > 0.0, "atom probabilities must be positive");
                                              tot += at.p;
                                          }
                                          require(std::abs(tot - 1.0) < 1e-12, "atom probabilities must sum to 1");
                                      },
                                      [](const UniformLaw& u) {
                                          require(u.lo < u.hi && std::isfinite(u.lo) && std::isfinite(u.hi),
                                                  "uniform jump law needs lo < hi");
                                      },
                                      [](const ParetoLaw& p) {
                                          require(p.xmin > 0.0, "Pareto xmin must be positive");
                                          require(p.tail > 2.0, "Pareto tail index must exceed 2 for square integrability");
                                      }},
                                  cp.law);
                   },
                   [](const TemperedStable& ts) {
                       require(ts.alpha > 0.0 && ts.alpha < 2.0, "tempered stable alpha must lie in (0,2)");
                       require(ts.lambda > 0.0, "tempering lambda must be positive");
                       require(ts.c > 0.0, "tempered stable scale c must be positive");
                   }},
               js);
}

inline bool infinite_activity(const JumpSpec& js) { return std::holds_alternative<TemperedStable>(js); }

// Integral of |x|^k against nu; +inf when divergent.
inline double abs_moment(const JumpSpec& js, double k) {
    return std::visit(
        overloaded{
            [](const NoJumps&) { return 0.0; },
            [k](const CompoundPoisson& cp) {
                double m = std::visit(
                    overloaded{[k](const AtomLaw& a) {
                                   double s = 0.0;
                                   for (auto& at : a.atoms) s += at.p * std::pow(std::abs(at.x), k);
                                   return s;
                               },
                               [k](const UniformLaw& u) {
                                   auto F = [k](double x) {
                                       return std::copysign(std::pow(std::abs(x), k + 1.0), x) / (k + 1.0);
                                   };
                                   // integral of |x|^k = sign-corrected antiderivative
                                   double v;
                                   if (u.lo >= 0.0 || u.hi <= 0.0)
                                       v = std::abs(F(u.hi) - F(u.lo));
                                   else
                                       v = F(u.hi) - F(u.lo);
                                   return v / (u.hi - u.lo);
                               },
                               [k](const ParetoLaw& p) {
                                   if (k >= p.tail) return inf;
                                   return p.tail * std::pow(p.xmin, k) / (p.tail - k);
                               }},
                    cp.law);
                return cp.rate * m;
            },
            [k](const TemperedStable& ts) {
                if (k <= ts.alpha) return inf;
                return 2.0 * ts.c * std::tgamma(k - ts.alpha) * std::pow(ts.lambda, ts.alpha - k);
            }},
        js);
}

// Integral of |x|^k nu(dx) for integer k >= 2; +inf signals divergence.
inline double nu_moment(const JumpSpec& js, int k) {
    require(k >= 2, "nu_moment requires k >= 2");
    validate(js);
    return abs_moment(js, k);
}

// -int_{|x|>1} x nu(dx)
inline double drift_gamma(const JumpSpec& js) {
    validate(js);
    return std::visit(overloaded{[](const NoJumps&) { return 0.0; },
                                 [](const CompoundPoisson& cp) {
                                     double m = std::visit(
                                         overloaded{[](const AtomLaw& a) {
                                                        double s = 0.0;
                                                        for (auto& at : a.atoms)
                                                            if (std::abs(at.x) > 1.0) s += at.p * at.x;
                                                        return s;
                                                    },
                                                    [](const UniformLaw& u) {
                                                        auto piece = [&](double a, double b) {
                                                            return b > a ? 0.5 * (b * b - a * a) : 0.0;
                                                        };
                                                        double s = piece(u.lo, std::min(u.hi, -1.0)) +
                                                                   piece(std::max(u.lo, 1.0), u.hi);
                                                        return s / (u.hi - u.lo);
                                                    },
                                                    [](const ParetoLaw&) { return 0.0; }},
                                         cp.law);
                                     return -cp.rate * m;
                                 },
                                 [](const TemperedStable&) { return 0.0; }},
                      js);
}

// ---------------------------------------------------------------- Levy model

struct LevyModel {
    double sigma = 0.0;
    JumpSpec jumps = NoJumps{};
    double small_jump_cutoff = 0.0;  // 0 selects the default for infinite activity
    bool gauss_compensation = true;

    double gamma() const { return drift_gamma(jumps); }
    // sigma^2 + int x^2 nu(dx)
    double variance_rate() const { return sigma * sigma + abs_moment(jumps, 2.0); }
};

// Second moment of nu carried by |x| < eps (tempered stable only).
inline double small_jump_variance(const TemperedStable& ts, double eps) {
    double a = 2.0 - ts.alpha;
    return 2.0 * ts.c * std::tgamma(a) * std::pow(ts.lambda, -a) * boost::math::gamma_p(a, ts.lambda * eps);
}

// Cutoff with int_{|x|<eps} x^2 nu = frac * int x^2 nu.
inline double default_cutoff(const TemperedStable& ts, double frac = 1e-4) {
    return boost::math::gamma_p_inv(2.0 - ts.alpha, frac) / ts.lambda;
}

inline LevyModel make_model(double sigma, JumpSpec jumps, double eps = 0.0, bool gauss_compensation = true) {
    require(sigma >= 0.0 && std::isfinite(sigma), "sigma must be non-negative");
    validate(jumps);
    LevyModel m{sigma, std::move(jumps), eps, gauss_compensation};
    if (auto* ts = std::get_if<TemperedStable>(&m.jumps)) {
        if (m.small_jump_cutoff <= 0.0) m.small_jump_cutoff = default_cutoff(*ts);
    }
    return m;
}

inline void validate(const LevyModel& m) {
    require(m.sigma >= 0.0 && std::isfinite(m.sigma), "sigma must be non-negative");
    validate(m.jumps);
    if (infinite_activity(m.jumps)) require(m.small_jump_cutoff > 0.0, "infinite activity needs a cutoff");
}

// Diffusion coefficient actually simulated (adds compensated small-jump variance).
inline double effective_sigma(const LevyModel& m) {
    double v = m.sigma * m.sigma;
    if (auto* ts = std::get_if<TemperedStable>(&m.jumps); ts && m.gauss_compensation)
        v += small_jump_variance(*ts, m.small_jump_cutoff);
    return std::sqrt(v);
}

// int x nu(dx) over the simulated jumps; the path subtracts t times this.
inline double simulated_drift(const LevyModel& m) {
    return std::visit(overloaded{[](const NoJumps&) { return 0.0; },
                                 [](const CompoundPoisson& cp) {
                                     double mean = std::visit(
                                         overloaded{[](const AtomLaw& a) {
                                                        double s = 0.0;
                                                        for (auto& at : a.atoms) s += at.p * at.x;
                                                        return s;
                                                    },
                                                    [](const UniformLaw& u) { return 0.5 * (u.lo + u.hi); },
                                                    [](const ParetoLaw&) { return 0.0; }},
                                         cp.law);
                                     return cp.rate * mean;
                                 },
                                 [](const TemperedStable&) { return 0.0; }},
                      m.jumps);
}

// ---------------------------------------------------------------------- grid

struct TimeGrid {
    std::vector<double> nodes;
    std::size_t zero_index = 0;  // nodes[zero_index] == 0
    double A = 0.0, T = 0.0;

    std::size_t n_cells() const { return nodes.size() - 1; }
    std::size_t n_positive_cells() const { return nodes.size() - 1 - zero_index; }
    double width(std::size_t j) const { return nodes[j + 1] - nodes[j]; }
    // index of the cell containing t (nodes[j] < t <= nodes[j+1])
    std::size_t cell_of(double t) const {
        auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
        std::size_t k = static_cast<std::size_t>(it - nodes.begin());
        return k == 0 ? 0 : k - 1;
    }
    bool operator==(const TimeGrid&) const = default;
};

// Uniform cells of width T/n_cells on [0,T]; on [-A,0] cells grow geometrically
// from the same width by `ratio` going into the past.
inline TimeGrid make_grid(double A, double T, int n_cells, double ratio = 1.05) {
    require(T > 0.0 && std::isfinite(T), "window end T must be positive");
    require(A >= 0.0 && std::isfinite(A), "window start A must be non-negative");
    require(n_cells >= 1, "n_cells must be >= 1");
    require(ratio >= 1.0, "negative-half growth ratio must be >= 1");
    TimeGrid g;
    g.A = A;
    g.T = T;
    double h = T / n_cells;
    std::vector<double> neg;
    double pos = 0.0, size = h;
    while (A - pos > 1e-12 * std::max(1.0, A)) {
        if (A - pos < 1.5 * size) {
            neg.push_back(-A);
            break;
        }
        pos += size;
        neg.push_back(-pos);
        size *= ratio;
    }
    for (auto it = neg.rbegin(); it != neg.rend(); ++it) g.nodes.push_back(*it);
    g.zero_index = g.nodes.size();
    for (int i = 0; i <= n_cells; ++i) g.nodes.push_back(i == n_cells ? T : i * h);
    return g;
}

// ---------------------------------------------------------------------- path

struct Jump {
    double time;
    double size;
};

struct LevyPath {
    TimeGrid grid;
    std::vector<double> dW;  // Brownian increments per cell, variance = cell width
    std::vector<Jump> jumps;  // sorted by time, never on a grid node
    std::uint64_t seed = 0;
    double sigma = 0.0;  // diffusion coefficient used (with small-jump compensation)
    double drift = 0.0;  // compensator: L has drift -drift per unit time

    // compensator over cell j
    double cell_drift(std::size_t j) const { return drift * grid.width(j); }
};

namespace detail {

inline double draw_jump_size(const CompoundPoisson& cp, Xoshiro256& rng) {
    for (;;) {
        double x = std::visit(overloaded{[&](const AtomLaw& a) {
                                             double u = rng.uniform(), acc = 0.0;
                                             for (auto& at : a.atoms) {
                                                 acc += at.p;
                                                 if (u <= acc) return at.x;
                                             }
                                             return a.atoms.back().x;
                                         },
                                         [&](const UniformLaw& u) { return u.lo + (u.hi - u.lo) * rng.uniform(); },
                                         [&](const ParetoLaw& p) {
                                             double r = p.xmin * std::pow(rng.uniform(), -1.0 / p.tail);
                                             return rng.uniform() < 0.5 ? -r : r;
                                         }},
                              cp.law);
        if (x != 0.0) return x;
    }
}

inline bool on_node(const TimeGrid& g, double t) { return std::binary_search(g.nodes.begin(), g.nodes.end(), t); }

inline constexpr double max_expected_jumps = 5e7;

}  // namespace detail

inline LevyPath simulate_path(const LevyModel& model, const TimeGrid& grid, std::uint64_t seed) {
    validate(model);
    LevyPath p;
    p.grid = grid;
    p.seed = seed;
    p.sigma = effective_sigma(model);
    p.drift = simulated_drift(model);
    const double lo = -grid.A, span = grid.A + grid.T;
    if (!(span > 0.0)) throw std::invalid_argument("empty simulation window");

    Xoshiro256 gauss(substream_seed(seed, 0, 1));
    std::normal_distribution<double> normal(0.0, 1.0);
    p.dW.resize(grid.n_cells());
    for (std::size_t j = 0; j < p.dW.size(); ++j) p.dW[j] = normal(gauss) * std::sqrt(grid.width(j));

    Xoshiro256 jr(substream_seed(seed, 0, 2));
    auto draw_time = [&]() {
        for (;;) {
            double t = lo + span * jr.uniform();
            if (t > lo && t <= grid.T && !detail::on_node(grid, t)) return t;
        }
    };
    std::visit(overloaded{[](const NoJumps&) {},
                          [&](const CompoundPoisson& cp) {
                              double mean = cp.rate * span;
                              if (mean > detail::max_expected_jumps)
                                  throw NumericalFailure("expected jump count exceeds the simulation guard");
                              std::poisson_distribution<long> pois(mean);
                              long n = pois(jr);
                              p.jumps.reserve(n);
                              for (long i = 0; i < n; ++i) {
                                  double t = draw_time();
                                  p.jumps.push_back({t, detail::draw_jump_size(cp, jr)});
                              }
                          },
                          [&](const TemperedStable& ts) {
                              // proposals from c e^{-lambda eps} x^{-1-alpha} on x >= eps per side,
                              // accepted with probability e^{-lambda (x - eps)}
                              double eps = model.small_jump_cutoff;
                              double side_rate = ts.c * std::exp(-ts.lambda * eps) * std::pow(eps, -ts.alpha) / ts.alpha;
                              double mean = 2.0 * side_rate * span;
                              if (mean > detail::max_expected_jumps)
                                  throw NumericalFailure("expected jump count exceeds the simulation guard");
                              std::poisson_distribution<long> pois(mean);
                              long n = pois(jr);
                              for (long i = 0; i < n; ++i) {
                                  double t = draw_time();
                                  double x = eps * std::pow(jr.uniform(), -1.0 / ts.alpha);
                                  double sgn = jr.uniform() < 0.5 ? -1.0 : 1.0;
                                  if (jr.uniform() <= std::exp(-ts.lambda * (x - eps))) p.jumps.push_back({t, sgn * x});
                              }
                          }},
               model.jumps);
    std::sort(p.jumps.begin(), p.jumps.end(), [](const Jump& a, const Jump& b) { return a.time < b.time; });
    return p;
}

inline LevyPath simulate_path(const LevyModel& model, double A, double T, int n_cells, std::uint64_t seed) {
    return simulate_path(model, make_grid(A, T, n_cells), seed);
}

// Merge positive-half cells in groups of `factor`; jumps and the negative half are kept.
inline LevyPath coarsen(const LevyPath& p, int factor) {
    require(factor >= 1, "coarsening factor must be >= 1");
    std::size_t npos = p.grid.n_positive_cells();
    require(npos % factor == 0, "coarsening factor must divide the number of positive cells");
    LevyPath q = p;
    std::size_t z = p.grid.zero_index;
    q.grid.nodes.assign(p.grid.nodes.begin(), p.grid.nodes.begin() + z + 1);
    q.dW.assign(p.dW.begin(), p.dW.begin() + z);
    for (std::size_t c = 0; c < npos / factor; ++c) {
        double s = 0.0;
        for (int k = 0; k < factor; ++k) s += p.dW[z + c * factor + k];
        q.dW.push_back(s);
        q.grid.nodes.push_back(p.grid.nodes[z + (c + 1) * factor]);
    }
    return q;
}

// L at the grid nodes of [0,T] (index 0 <-> t = 0).
// Summation order matches the Volterra simulator so the indicator kernel reproduces it exactly.
inline std::vector<double> reconstruct_L(const LevyPath& p) {
    const auto& g = p.grid;
    std::size_t z = g.zero_index, n = g.n_positive_cells();
    std::vector<double> out(n + 1);
    double gs = 0.0, cs = 0.0, js = 0.0;
    auto jt = std::upper_bound(p.jumps.begin(), p.jumps.end(), 0.0, [](double v, const Jump& j) { return v < j.time; });
    for (std::size_t i = 0; i <= n; ++i) {
        double t = g.nodes[z + i];
        if (i > 0) {
            gs += p.dW[z + i - 1];
            cs += g.width(z + i - 1);
        }
        for (; jt != p.jumps.end() && jt->time <= t; ++jt) js += jt->size;
        out[i] = p.sigma * gs + js - p.drift * cs;
    }
    return out;
}

// rows: grid nodes (time, gaussian_cumsum) then jumps (jump_time, jump_size)
inline void write_csv(const LevyPath& p, std::ostream& os) {
    os << "time,gaussian_cumsum,jump_time,jump_size\n";
    os.precision(17);
    const auto& g = p.grid;
    std::vector<double> cum(g.nodes.size(), 0.0);
    // cumulative sum anchored at t = 0
    for (std::size_t j = g.zero_index; j < g.n_cells(); ++j) cum[j + 1] = cum[j] + p.sigma * p.dW[j];
    for (std::size_t j = g.zero_index; j-- > 0;) cum[j] = cum[j + 1] - p.sigma * p.dW[j];
    for (std::size_t i = 0; i < g.nodes.size(); ++i) os << g.nodes[i] << ',' << cum[i] << ",,\n";
    for (auto& j : p.jumps) os << ",," << j.time << ',' << j.size << '\n';
}

// ------------------------------------------------------------ nu integration

namespace detail {

template <class F>
void check_small_jump_growth(F& h) {
    auto ratio = [&](double x) { return std::max(magnitude(h(x)), magnitude(h(-x))) / (x * x); };
    double r2 = ratio(1e-2), r6 = ratio(1e-6);
    if (!std::isfinite(r6) || r6 > 100.0 * std::max(r2, 1e-300) + 1e-12)
        throw NumericalFailure("integrand is not O(x^2) near 0 under an infinite-activity Levy measure");
}

}  // namespace detail

// Integral of h against nu. Exact over atoms, adaptive quadrature for densities.
template <class F>
auto nu_integrate(const JumpSpec& js, F&& h, const QuadratureSpec& q = {})
    -> QuadResult<std::invoke_result_t<F&, double>> {
    using V = std::invoke_result_t<F&, double>;
    validate(js);
    QuadResult<V> out{};
    auto add = [&](const QuadResult<V>& r, double scale) {
        out.value += scale * r.value;
        out.error += std::abs(scale) * r.error;
    };
    std::visit(
        overloaded{
            [](const NoJumps&) {},
            [&](const CompoundPoisson& cp) {
                std::visit(overloaded{[&](const AtomLaw& a) {
                                          for (auto& at : a.atoms) out.value += (cp.rate * at.p) * h(at.x);
                                      },
                                      [&](const UniformLaw& u) {
                                          double dens = cp.rate / (u.hi - u.lo);
                                          if (u.lo < 0.0 && u.hi > 0.0) {
                                              add(gauss_kronrod(h, u.lo, 0.0, q), dens);
                                              add(gauss_kronrod(h, 0.0, u.hi, q), dens);
                                          } else {
                                              add(gauss_kronrod(h, u.lo, u.hi, q), dens);
                                          }
                                      },
                                      [&](const ParetoLaw& p) {
                                          // x = xmin y^{-1/tail} maps each side to uniform y in (0,1)
                                          for (double sgn : {-1.0, 1.0}) {
                                              auto g = [&](double y) { return h(sgn * p.xmin * std::pow(y, -1.0 / p.tail)); };
                                              add(integrate_singular(g, 0.0, 1.0, q, SingularHints{2.0 / p.tail, 0.0, 0.0}),
                                                  0.5 * cp.rate);
                                          }
                                      }},
                           cp.law);
            },
            [&](const TemperedStable& ts) {
                detail::check_small_jump_growth(h);
                for (double sgn : {-1.0, 1.0}) {
                    auto near = [&](double x) { return h(sgn * x) * (ts.c * std::exp(-ts.lambda * x) * std::pow(x, -1.0 - ts.alpha)); };
                    add(integrate_singular(near, 0.0, 1.0, q, SingularHints{std::max(0.0, ts.alpha - 1.0), 0.0, 0.0}), 1.0);
                    // x = 1 - log(y)/lambda on [1, inf)
                    auto far = [&](double y) {
                        double x = 1.0 - std::log(y) / ts.lambda;
                        return h(sgn * x) * (ts.c * std::exp(-ts.lambda) * std::pow(x, -1.0 - ts.alpha) / ts.lambda);
                    };
                    add(gauss_kronrod(far, 0.0, 1.0, q), 1.0);
                }
            }},
        js);
    return out;
}

// Fixed nodes/weights with sum w_i h(x_i) ~ int h dnu, restricted to [lo,hi].
// Used for inner integrals that are evaluated many times, where a fixed rule
// keeps the result smooth in the outer variables.
struct NuRule {
    std::vector<double> x, w;
    std::size_t size() const { return x.size(); }
};

inline NuRule make_nu_rule(const JumpSpec& js, int order, int panels = 2, double lo = -inf, double hi = inf,
                           std::vector<double> breakpoints = {}) {
    validate(js);
    NuRule r;
    auto push_gl = [&](double a, double b, double dens) {
        if (!(b > a)) return;
        std::vector<double> cuts{a};
        for (double c : breakpoints)
            if (c > a && c < b) cuts.push_back(c);
        if (a < 0.0 && b > 0.0) cuts.push_back(0.0);
        cuts.push_back(b);
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            Rule g = gl_rule(cuts[i], cuts[i + 1], panels, order);
            for (std::size_t k = 0; k < g.size(); ++k) {
                r.x.push_back(g.x[k]);
                r.w.push_back(g.w[k] * dens);
            }
        }
    };
    std::visit(
        overloaded{
            [](const NoJumps&) {},
            [&](const CompoundPoisson& cp) {
                std::visit(overloaded{[&](const AtomLaw& a) {
                                          for (auto& at : a.atoms)
                                              if (at.x >= lo && at.x <= hi) {
                                                  r.x.push_back(at.x);
                                                  r.w.push_back(cp.rate * at.p);
                                              }
                                      },
                                      [&](const UniformLaw& u) {
                                          push_gl(std::max(u.lo, lo), std::min(u.hi, hi), cp.rate / (u.hi - u.lo));
                                      },
                                      [&](const ParetoLaw& p) {
                                          // per side in y with x = xmin y^{-1/tail}; y graded toward 0
                                          for (double sgn : {-1.0, 1.0}) {
                                              double a = sgn > 0 ? std::max(lo, p.xmin) : std::max(-hi, p.xmin);
                                              double b = sgn > 0 ? hi : -lo;
                                              if (!(b > a)) continue;
                                              double y1 = std::pow(a / p.xmin, -p.tail);
                                              double y0 = std::isfinite(b) ? std::pow(b / p.xmin, -p.tail) : 0.0;
                                              Rule y = power_rule(y0, y1, 1.0 / (1.0 - 2.0 / p.tail), panels, order);
                                              for (std::size_t k = 0; k < y.size(); ++k) {
                                                  r.x.push_back(sgn * p.xmin * std::pow(y.x[k], -1.0 / p.tail));
                                                  r.w.push_back(0.5 * cp.rate * y.w[k]);
                                              }
                                          }
                                      }},
                           cp.law);
            },
            [&](const TemperedStable& ts) {
                auto dens = [&](double x) { return ts.c * std::exp(-ts.lambda * x) * std::pow(x, -1.0 - ts.alpha); };
                for (double sgn : {-1.0, 1.0}) {
                    double a = sgn > 0 ? std::max(lo, 0.0) : std::max(-hi, 0.0);
                    double b = sgn > 0 ? hi : -lo;
                    if (!(b > a)) continue;
                    double r0 = std::max(a, 1e-8), r1 = std::min(b, 1.0);
                    if (r1 > r0) {
                        Rule g = log_rule(r0, r1, order, 1.0);
                        for (std::size_t k = 0; k < g.size(); ++k) {
                            r.x.push_back(sgn * g.x[k]);
                            r.w.push_back(g.w[k] * dens(g.x[k]));
                        }
                    }
                    double f0 = std::max(a, 1.0);
                    if (b > f0) {
                        // x = f0 - log(y)/lambda
                        double y0 = std::isfinite(b) ? std::exp(-ts.lambda * (b - f0)) : 0.0;
                        Rule y = gl_rule(y0, 1.0, panels * 2, order);
                        for (std::size_t k = 0; k < y.size(); ++k) {
                            double x = f0 - std::log(y.x[k]) / ts.lambda;
                            r.x.push_back(sgn * x);
                            r.w.push_back(y.w[k] * ts.c * std::exp(-ts.lambda * f0) * std::pow(x, -1.0 - ts.alpha) / ts.lambda);
                        }
                    }
                }
            }},
        js);
    return r;
}

}  // namespace lvv
