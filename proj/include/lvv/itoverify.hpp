#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "charfn.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stransform.hpp"
#include "volterra.hpp"

namespace lvv {

// ------------------------------------------------------------ preconditions

struct MomentGate {
    double order = 4.0;
    double value = 0.0;
    bool pass = true;
    std::string note;
};

namespace detail {

inline bool diag_vanishes(const KernelHandle& k, double T) {
    for (int i = 1; i <= 16; ++i)
        if (k.diag(T * i / 16.0) != 0.0) return false;
    return true;
}

inline bool dt_vanishes(const KernelHandle& k, double T) {
    for (int i = 1; i <= 8; ++i) {
        double t = T * i / 8.0;
        for (double s : {-50.0, -3.0, -0.5, -1e-3, 0.3 * t, 0.9 * t})
            if (s < t && k.eval_dt(t, s) != 0.0) return false;
    }
    return true;
}

inline TimeGrid coarsen_grid(const TimeGrid& g, int factor) {
    std::size_t z = g.zero_index, n = g.n_positive_cells();
    require(n % factor == 0, "coarsening factor must divide the number of positive cells");
    TimeGrid c = g;
    c.nodes.assign(g.nodes.begin(), g.nodes.begin() + z + 1);
    for (std::size_t i = factor; i <= n; i += factor) c.nodes.push_back(g.nodes[z + i]);
    return c;
}

}  // namespace detail

// L(1) must have p moments, p = 4 v (2q+2) for polynomial G of degree q and 4 for
// bounded-derivative G; continuous M (f(t,t) = 0) relaxes the bounded case to 2.
inline MomentGate moment_gate(const SmoothTestFunction& G, const KernelHandle& k, const LevyModel& model, double T) {
    MomentGate mg;
    if (G.kind == GKind::Polynomial) {
        mg.order = std::max(4.0, 2.0 * G.degree() + 2.0);
        mg.note = "polynomial growth";
    } else if (detail::diag_vanishes(k, T)) {
        mg.order = 2.0;
        mg.note = "continuous M: second moment suffices";
    } else {
        mg.order = 4.0;
        mg.note = "bounded derivatives";
    }
    mg.value = std::holds_alternative<NoJumps>(model.jumps) ? 0.0 : abs_moment(model.jumps, mg.order);
    mg.pass = std::isfinite(mg.value);
    return mg;
}

// ------------------------------------------------------------ lattices

struct LatticeSpec {
    int s_order = 8;   // per s-piece
    int t_order = 48;  // per s-row
    int x_order = 8;   // per side of 0

    LatticeSpec doubled() const { return {2 * s_order, 2 * t_order, 2 * x_order}; }
};

// nu-quadrature in x. For uniform laws the nodes are Gauss-Legendre per side of 0 and
// bump integrals are folded in through Lagrange interpolation on those nodes.
struct XLattice {
    struct Group {
        std::size_t first, count;
        double lo, hi;
    };
    std::vector<double> x, w;
    std::vector<Group> groups;
    double density = 0.0;

    std::size_t size() const { return x.size(); }
    bool interpolating() const { return !groups.empty(); }
};

inline XLattice make_x_lattice(const LevyModel& model, int order) {
    XLattice xl;
    if (auto* cp = std::get_if<CompoundPoisson>(&model.jumps)) {
        if (auto* u = std::get_if<UniformLaw>(&cp->law)) {
            xl.density = cp->rate / (u->hi - u->lo);
            std::vector<std::pair<double, double>> sides;
            if (u->lo < 0.0 && u->hi > 0.0) sides = {{u->lo, 0.0}, {0.0, u->hi}};
            else sides = {{u->lo, u->hi}};
            for (auto [a, b] : sides) {
                Rule r = gl_rule(a, b, 1, order);
                xl.groups.push_back({xl.x.size(), r.size(), a, b});
                for (std::size_t i = 0; i < r.size(); ++i) {
                    xl.x.push_back(r.x[i]);
                    xl.w.push_back(r.w[i] * xl.density);
                }
            }
            return xl;
        }
    }
    NuRule r;
    double eps = model.small_jump_cutoff;
    if (eps > 0.0) {
        r = make_nu_rule(model.jumps, order, 2, -inf, -eps);
        auto b = make_nu_rule(model.jumps, order, 2, eps, inf);
        r.x.insert(r.x.end(), b.x.begin(), b.x.end());
        r.w.insert(r.w.end(), b.w.begin(), b.w.end());
    } else {
        r = make_nu_rule(model.jumps, order, 2);
    }
    xl.x = r.x;
    xl.w = r.w;
    return xl;
}

// c_i with sum_i c_i h(x_i) ~ int h(x) x^k g1(x) nu(dx) for smooth h
inline std::vector<double> bump_weights(const XLattice& xl, const Bump& b, int k) {
    std::vector<double> c(xl.size(), 0.0);
    if (!xl.interpolating()) {
        for (std::size_t i = 0; i < xl.size(); ++i) c[i] = xl.w[i] * std::pow(xl.x[i], k) * b(xl.x[i]);
        return c;
    }
    for (auto& grp : xl.groups) {
        double lo = std::max(grp.lo, b.lo()), hi = std::min(grp.hi, b.hi());
        if (!(hi > lo)) continue;
        Rule fine = gl_rule(lo, hi, 8, 32);
        for (std::size_t q = 0; q < fine.size(); ++q) {
            double xi = fine.x[q];
            double val = fine.w[q] * xl.density * std::pow(xi, k) * b(xi);
            if (val == 0.0) continue;
            for (std::size_t i = 0; i < grp.count; ++i) {
                double L = 1.0, xi_i = xl.x[grp.first + i];
                for (std::size_t m = 0; m < grp.count; ++m)
                    if (m != i) L *= (xi - xl.x[grp.first + m]) / (xi_i - xl.x[grp.first + m]);
                c[grp.first + i] += val * L;
            }
        }
    }
    return c;
}

// Tensor lattice in (s, t) for integrals int ds int_{0 v s}^T dt df/dt(t,s) h(t, s).
// Rows follow the window pieces in s; within a row t is graded toward 0 v s.
class ItoLattice {
public:
    struct Row {
        double s, ws;
        std::vector<std::size_t> slot;  // index into times()
        std::vector<double> w, f;       // t-weight times df/dt, and f(t,s)
    };

    ItoLattice() = default;
    ItoLattice(const KernelHandle& k, const LevyModel& model, double T, double A, LatticeSpec spec)
        : spec_(spec), x_(make_x_lattice(model, spec.x_order)) {
        if (detail::dt_vanishes(k, T)) return;
        for (auto& n : s_nodes(k, T, A, spec.s_order, 1)) {
            Row r;
            r.s = n.s;
            r.ws = n.w;
            // rule in the lag u = t - s, which is never formed as a difference
            Rule ur;
            if (n.s < 0.0) {
                // df/dt varies on the scale |s| near t = 0: geometric panels
                double u0 = -n.s, u1 = T - n.s;
                int panels = std::max(4, static_cast<int>(std::ceil(std::log(u1 / u0))));
                ur = log_rule(u0, u1, std::max(4, spec.t_order / 4), std::log(u1 / u0) / panels);
            } else {
                ur = power_rule(0.0, T - n.s, std::max(1.0, k.diag_grading), 1, spec.t_order);
            }
            for (std::size_t i = 0; i < ur.size(); ++i) {
                double u = ur.x[i], t = n.s + u;
                r.slot.push_back(times_.size());
                times_.push_back(t);
                r.w.push_back(ur.w[i] * k.dt3(t, n.s, u));
                r.f.push_back(k.f3(t, n.s, u));
            }
            rows_.push_back(std::move(r));
        }
    }

    bool empty() const { return rows_.empty(); }
    const std::vector<Row>& rows() const { return rows_; }
    const std::vector<double>& times() const { return times_; }
    const XLattice& x() const { return x_; }
    const LatticeSpec& spec() const { return spec_; }

    std::vector<double> path_values(const VolterraPath& vp) const {
        std::vector<double> m(times_.size());
        for (std::size_t i = 0; i < times_.size(); ++i) m[i] = vp.left_at(times_[i]);
        return m;
    }

    struct Eval {
        double nu = 0.0;
        std::vector<double> X0;  // per row: int df/dt h(M(t)) dt
        std::vector<double> X;   // per row and x-node: int df/dt h(M(t) + x f) dt
    };

    // h plays the role of G'; nu accumulates int int int x (h(M+xf) - h(M)) df/dt nu(dx) dt ds
    template <class H>
    Eval eval(H&& h, const std::vector<double>& m, bool with_x) const {
        Eval e;
        const std::size_t nx = with_x ? x_.size() : 0;
        e.X0.assign(rows_.size(), 0.0);
        e.X.assign(rows_.size() * nx, 0.0);
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            const Row& row = rows_[r];
            double* X = e.X.data() + r * nx;
            double nu_row = 0.0;
            for (std::size_t i = 0; i < row.w.size(); ++i) {
                double mt = m[row.slot[i]], wt = row.w[i], ft = row.f[i];
                double base = h(mt);
                e.X0[r] += wt * base;
                double acc = 0.0;
                for (std::size_t j = 0; j < nx; ++j) {
                    double v = h(mt + x_.x[j] * ft);
                    X[j] += wt * v;
                    acc += x_.w[j] * x_.x[j] * (v - base);
                }
                nu_row += wt * acc;
            }
            e.nu += row.ws * nu_row;
        }
        return e;
    }

private:
    LatticeSpec spec_;
    XLattice x_;
    std::vector<Row> rows_;
    std::vector<double> times_;
};

// Per-functional weights on the lattice: S(Lambda-term) = sum WJ X + sum WG X0,
// and rho-weighted rows for integrands without x-dependence.
struct LambdaWeights {
    std::vector<double> WJ, WG, rho;
};

inline LambdaWeights lambda_weights(const ItoLattice& lat, const LevyModel& model, const TestFunctional& g) {
    LambdaWeights lw;
    const auto& rows = lat.rows();
    const std::size_t nx = lat.x().size();
    lw.WJ.assign(rows.size() * nx, 0.0);
    lw.WG.assign(rows.size(), 0.0);
    lw.rho.assign(rows.size(), 0.0);
    if (g.is_zero() || lat.empty()) return lw;
    Tilt tilt(model, g);
    std::vector<std::vector<double>> c2;
    for (auto& jt : g.jump_terms) c2.push_back(bump_weights(lat.x(), jt.g1, 2));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double s = rows[r].s, ws = rows[r].ws;
        lw.WG[r] = model.sigma * ws * g.g0(s);
        lw.rho[r] = ws * tilt(s);
        for (std::size_t j = 0; j < g.jump_terms.size(); ++j) {
            double p = ws * g.jump_terms[j].mu * g.jump_terms[j].g2(s);
            if (p == 0.0) continue;
            for (std::size_t i = 0; i < nx; ++i) lw.WJ[r * nx + i] += p * c2[j][i];
        }
    }
    return lw;
}

// (t, x) lattice for the compensator of the jump sum:
// int_0^T dt int nu(dx) (1 + g*(x,t)) [G(M+xf) - G(M) - G'(M) x f], f = f(t,t)
struct JumpCompLattice {
    std::vector<double> t, ft;
    std::vector<std::vector<double>> W;  // per g: t-node x x-node weights
    XLattice x;
};

inline JumpCompLattice jump_comp_lattice(const KernelHandle& k, const LevyModel& model, double T, LatticeSpec spec,
                                         const std::vector<TestFunctional>& gs) {
    JumpCompLattice jl;
    jl.x = make_x_lattice(model, spec.x_order);
    Rule r = gl_rule(0.0, T, 4, spec.t_order / 2);
    jl.t = r.x;
    for (double t : jl.t) jl.ft.push_back(k.diag(t));
    const std::size_t nx = jl.x.size();
    for (auto& g : gs) {
        std::vector<double> W(r.size() * nx, 0.0);
        std::vector<std::vector<double>> c1;
        for (auto& jt : g.jump_terms) c1.push_back(bump_weights(jl.x, jt.g1, 1));
        for (std::size_t a = 0; a < r.size(); ++a)
            for (std::size_t i = 0; i < nx; ++i) {
                double v = jl.x.w[i];
                for (std::size_t j = 0; j < g.jump_terms.size(); ++j)
                    v += g.jump_terms[j].mu * g.jump_terms[j].g2(jl.t[a]) * c1[j][i];
                W[a * nx + i] = r.w[a] * v;
            }
        jl.W.push_back(std::move(W));
    }
    return jl;
}

// ------------------------------------------------------------ term sets

struct TermValue {
    double value = 0.0;
    double std_error = 0.0;
    double quad = 0.0;  // quadrature / lattice bound
    double discretisation = 0.0;
    std::string note;
};

inline nlohmann::json to_json(const TermValue& t) {
    nlohmann::json j{
        {"value", t.value}, {"std_error", t.std_error}, {"quad", t.quad}, {"discretisation", t.discretisation}};
    if (!t.note.empty()) j["note"] = t.note;
    return j;
}

struct CrossCheck {
    bool present = false;
    double difference = 0.0;
    double budget = 0.0;
    bool pass = true;
};

inline nlohmann::json to_json(const CrossCheck& c) {
    return {{"difference", c.difference}, {"budget", c.budget}, {"pass", c.pass}};
}

struct ItoTermSet {
    std::string mode;  // pathwise | expectation | stransform
    std::string scenario, kernel, G, g;
    TermValue lhs, term_sigma, term_jumpsum, term_nu, term_L, term_lambda;
    bool lambda_present = true;
    TermValue residual;
    double discretisation = 0.0;
    double budget = 0.0;
    bool pass = false;
    CrossCheck lhs_oracles;     // Fourier route vs weighted Monte Carlo
    CrossCheck jumpsum_check;   // weighted jump sum vs its compensator lattice
    TermValue lhs_fourier;
    WeightDiagnostics weights;
    double jumpsum_second_moment = 0.0;
    std::size_t n_paths = 0;
    // failing cells only: deterministic oracles per term and the term they point at
    std::map<std::string, CrossCheck> term_checks;
    std::string suspect;
    std::vector<std::string> notes;

    std::string cell() const { return scenario + "/" + G + (g.empty() ? "" : "/" + g); }
};

inline nlohmann::json to_json(const ItoTermSet& s) {
    nlohmann::json j;
    j["mode"] = s.mode;
    j["scenario"] = s.scenario;
    j["kernel"] = s.kernel;
    j["G"] = s.G;
    if (!s.g.empty()) j["g"] = s.g;
    j["n_paths"] = s.n_paths;
    j["lhs"] = to_json(s.lhs);
    j["terms"] = {{"term_sigma", to_json(s.term_sigma)},
                  {"term_jumpsum", to_json(s.term_jumpsum)},
                  {"term_nu", to_json(s.term_nu)},
                  {"term_L", to_json(s.term_L)}};
    if (s.lambda_present) j["terms"]["term_lambda"] = to_json(s.term_lambda);
    j["residual"] = to_json(s.residual);
    j["discretisation"] = s.discretisation;
    j["budget"] = s.budget;
    j["pass"] = s.pass;
    if (s.lhs_oracles.present) {
        j["lhs_fourier"] = to_json(s.lhs_fourier);
        j["lhs_oracles"] = to_json(s.lhs_oracles);
    }
    if (s.jumpsum_check.present) j["jumpsum_check"] = to_json(s.jumpsum_check);
    if (s.mode == "stransform")
        j["weights"] = {{"mean", s.weights.mean},
                        {"variance", s.weights.variance},
                        {"negative_fraction", s.weights.negative_fraction}};
    j["jumpsum_second_moment"] = s.jumpsum_second_moment;
    for (auto& [name, c] : s.term_checks) j["term_checks"][name] = to_json(c);
    if (!s.suspect.empty()) j["suspect"] = s.suspect;
    j["notes"] = s.notes;
    return j;
}

// ------------------------------------------------------------ pathwise

// Classical reduction: with the indicator kernel every term is an ordinary pathwise quantity.
inline ItoTermSet eval_terms_pathwise(const SmoothTestFunction& G, const KernelHandle& k, const VolterraPath& vp,
                                      const LevyPath& lp) {
    if (k.label != "indicator") throw ConfigError("pathwise mode requires the indicator kernel");
    ItoTermSet r;
    r.mode = "pathwise";
    r.kernel = k.label;
    r.G = G.name;
    r.lambda_present = false;
    r.n_paths = 1;
    r.lhs.value = G.G(vp.terminal()) - G.G(0.0);
    double s2 = lp.sigma * lp.sigma, sig = 0.0, L = 0.0, jump = 0.0;
    for (std::size_t i = 0; i + 1 < vp.size(); ++i) {
        double a = vp.values[i], b = vp.left_limits[i + 1];
        double dt = vp.times[i + 1] - vp.times[i];
        sig += 0.5 * (G.d2G(a) + G.d2G(b)) * dt;
        L += G.dG(a) * (b - a);
    }
    for (std::size_t i = 0, j = 0; i < vp.size(); ++i) {
        if (vp.is_node[i]) continue;
        double left = vp.left_limits[i], dm = vp.jumps[j++].size;
        L += G.dG(left) * dm;
        jump += G.G(left + dm) - G.G(left) - G.dG(left) * dm;
    }
    r.term_sigma.value = 0.5 * s2 * sig;
    r.term_jumpsum.value = jump;
    r.term_L.value = L;
    r.term_nu.note = "df/dt = 0";
    r.residual.value = r.lhs.value - r.term_sigma.value - r.term_jumpsum.value - r.term_L.value;
    return r;
}

struct RefinementStudy {
    std::vector<double> dt, rms_residual;
    double rms_G = 0.0;
    std::vector<double> ratios;  // rms at level i over rms at level i+1
};

// RMS pathwise residual at T / (n_fine / factor) cells for each factor, common random numbers
inline RefinementStudy pathwise_refinement(const SmoothTestFunction& G, const LevyModel& model, double T, int n_fine,
                                           const std::vector<int>& factors, std::size_t n_paths, std::uint64_t seed,
                                           int workers = 1) {
    auto grid = make_grid(0.0, T, n_fine);
    auto k = indicator_kernel();
    struct Rec {
        std::vector<double> res;
        double g = 0.0;
    };
    auto recs = parallel_map<Rec>(n_paths, workers, [&](std::size_t i) {
        auto lp = simulate_path(model, grid, substream_seed(seed, i));
        Rec r;
        for (int f : factors) {
            auto cp = coarsen(lp, f);
            auto vp = VolterraSimulator(k, cp.grid).simulate(cp);
            auto ts = eval_terms_pathwise(G, k, vp, cp);
            r.res.push_back(ts.residual.value);
            if (f == factors.back()) r.g = G.G(vp.terminal());
        }
        return r;
    });
    RefinementStudy st;
    st.rms_residual.assign(factors.size(), 0.0);
    for (auto& r : recs) {
        for (std::size_t l = 0; l < factors.size(); ++l) st.rms_residual[l] += r.res[l] * r.res[l];
        st.rms_G += r.g * r.g;
    }
    for (auto& v : st.rms_residual) v = std::sqrt(v / n_paths);
    st.rms_G = std::sqrt(st.rms_G / n_paths);
    for (int f : factors) st.dt.push_back(T * f / n_fine);
    for (std::size_t l = 0; l + 1 < factors.size(); ++l) st.ratios.push_back(st.rms_residual[l] / st.rms_residual[l + 1]);
    return st;
}

// ------------------------------------------------------------ Monte Carlo scenarios

struct ScenarioSpec {
    std::string name = "scenario";
    KernelHandle kernel = frac_kernel(0.25);
    LevyModel model = make_model(1.0, NoJumps{});
    double T = 1.0, A = 100.0;
    int n_cells = 256;
    std::size_t n_paths = 10000;
    std::size_t check_paths = 1000;  // subset for lattice doubling and grid coarsening
    std::uint64_t seed = 1;
    int workers = 1;
    LatticeSpec lattice;
    QuadratureSpec quad;
    // fault injection for the report machinery: scales one per-path term
    std::string fault_term;
    double fault_scale = 1.0;
};

namespace detail {

struct PathRecord {
    double lhs = 0.0, sigma = 0.0, jump = 0.0, nu = 0.0;
    std::vector<double> w, L, Y, Z;
};

// Everything that depends on the grid but not on the path.
struct Level {
    TimeGrid grid;
    std::shared_ptr<VolterraSimulator> sim;
    std::vector<double> v;  // l2_norm_sq at the positive nodes
    std::vector<WeightEngine> weights;
};

inline Level make_level(const ScenarioSpec& sc, const TimeGrid& grid, const std::vector<TestFunctional>& gs) {
    Level lv;
    lv.grid = grid;
    lv.sim = std::make_shared<VolterraSimulator>(sc.kernel, grid);
    QuadratureSpec q = sc.quad;
    q.tail_cutoff = sc.A;
    for (std::size_t i = grid.zero_index; i < grid.nodes.size(); ++i)
        lv.v.push_back(l2_norm_sq(sc.kernel, grid.nodes[i], q).value);
    for (auto& g : gs) lv.weights.emplace_back(g, sc.model, grid);
    return lv;
}

class Engine {
public:
    Engine(const ScenarioSpec& sc, const std::vector<TestFunctional>& gs)
        : sc_(sc), gs_(gs), diag_zero_(diag_vanishes(sc.kernel, sc.T)) {
        fine_ = make_level(sc, make_grid(sc.A, sc.T, sc.n_cells), gs);
        coarse_ = make_level(sc, coarsen_grid(fine_.grid, 2), gs);
        base_ = ItoLattice(sc.kernel, sc.model, sc.T, sc.A, sc.lattice);
        dbl_ = ItoLattice(sc.kernel, sc.model, sc.T, sc.A, sc.lattice.doubled());
        for (auto& g : gs) {
            lw_base_.push_back(lambda_weights(base_, sc.model, g));
            lw_dbl_.push_back(lambda_weights(dbl_, sc.model, g));
            tilts_.emplace_back(sc.model, g);
        }
        has_jumps_ = !std::holds_alternative<NoJumps>(sc.model.jumps);
        if (!diag_zero_ && has_jumps_) {
            jc_base_ = jump_comp_lattice(sc.kernel, sc.model, sc.T, sc.lattice, gs);
            jc_dbl_ = jump_comp_lattice(sc.kernel, sc.model, sc.T, sc.lattice.doubled(), gs);
        }
    }

    bool lattice_empty() const { return base_.empty(); }
    bool diag_zero() const { return diag_zero_; }
    bool has_jump_check() const { return !diag_zero_ && has_jumps_; }
    const ItoLattice& lattice(bool doubled) const { return doubled ? dbl_ : base_; }
    const std::vector<LambdaWeights>& lambda(bool doubled) const { return doubled ? lw_dbl_ : lw_base_; }
    const Level& level(bool coarse) const { return coarse ? coarse_ : fine_; }

    std::pair<LevyPath, VolterraPath> paths(std::size_t i, bool coarse) const {
        auto lp = simulate_path(sc_.model, fine_.grid, substream_seed(sc_.seed, i));
        if (coarse) lp = coarsen(lp, 2);
        auto vp = level(coarse).sim->simulate(lp);
        return {std::move(lp), std::move(vp)};
    }

    PathRecord record(const SmoothTestFunction& G, std::size_t i, bool coarse, bool doubled) const {
        auto [lp, vp] = paths(i, coarse);
        const Level& lv = level(coarse);
        const ItoLattice& lat = lattice(doubled);
        PathRecord r;
        r.lhs = G.G(vp.terminal()) - G.G(0.0);
        // v at every recorded time: exact at nodes, linear in between
        auto v_at = [&](std::size_t k) {
            double t = vp.times[k];
            std::size_t c = lv.grid.cell_of(t) - lv.grid.zero_index;
            if (vp.is_node[k]) return lv.v[vp.times[k] == 0.0 ? 0 : c + 1];
            double a = lv.grid.nodes[lv.grid.zero_index + c], b = lv.grid.nodes[lv.grid.zero_index + c + 1];
            return lv.v[c] + (t - a) / (b - a) * (lv.v[c + 1] - lv.v[c]);
        };
        double sig = 0.0;
        double v0 = v_at(0);
        for (std::size_t k = 0; k + 1 < vp.size(); ++k) {
            double v1 = v_at(k + 1);
            sig += 0.5 * (G.d2G(vp.values[k]) + G.d2G(vp.left_limits[k + 1])) * (v1 - v0);
            v0 = v1;
        }
        r.sigma = 0.5 * lp.sigma * lp.sigma * sig;
        for (std::size_t k = 0, j = 0; k < vp.size(); ++k) {
            if (vp.is_node[k]) continue;
            double left = vp.left_limits[k], dm = vp.jumps[j++].size;
            r.jump += G.G(left + dm) - G.G(left) - G.dG(left) * dm;
        }
        const std::size_t ng = gs_.size();
        r.w.resize(ng);
        for (std::size_t g = 0; g < ng; ++g) r.w[g] = lv.weights[g](lp);
        // compensator form of the L-integral: int S(G'(M(t))) f(t,t) rho(t) dt
        r.L.assign(ng, 0.0);
        if (!diag_zero_)
            for (std::size_t g = 0; g < ng; ++g) {
                if (gs_[g].is_zero()) continue;
                double acc = 0.0;
                auto h = [&](double t, double m) { return sc_.kernel.diag(t) * tilts_[g](t) * G.dG(m); };
                for (std::size_t k = 0; k + 1 < vp.size(); ++k)
                    acc += 0.5 * (h(vp.times[k], vp.values[k]) + h(vp.times[k + 1], vp.left_limits[k + 1])) *
                           (vp.times[k + 1] - vp.times[k]);
                r.L[g] = acc;
            }
        r.Y.assign(ng, 0.0);
        if (!lat.empty()) {
            auto m = lat.path_values(vp);
            bool any_g = std::any_of(gs_.begin(), gs_.end(), [](auto& g) { return !g.is_zero(); });
            auto e = lat.eval([&](double x) { return G.dG(x); }, m, true);
            r.nu = e.nu;
            if (any_g) {
                const auto& lws = lambda(doubled);
                for (std::size_t g = 0; g < ng; ++g) {
                    double acc = 0.0;
                    for (std::size_t q = 0; q < e.X.size(); ++q) acc += lws[g].WJ[q] * e.X[q];
                    for (std::size_t q = 0; q < e.X0.size(); ++q) acc += lws[g].WG[q] * e.X0[q];
                    r.Y[g] = acc;
                }
            }
        }
        r.Z.assign(ng, 0.0);
        if (has_jump_check()) {
            const auto& jc = doubled ? jc_dbl_ : jc_base_;
            const std::size_t nx = jc.x.size();
            std::vector<double> phi(jc.t.size() * nx);
            for (std::size_t a = 0; a < jc.t.size(); ++a) {
                double m = vp.left_at(jc.t[a]), f = jc.ft[a];
                double g0 = G.G(m), g1 = G.dG(m);
                for (std::size_t i = 0; i < nx; ++i) {
                    double y = jc.x.x[i] * f;
                    phi[a * nx + i] = G.G(m + y) - g0 - g1 * y;
                }
            }
            for (std::size_t g = 0; g < ng; ++g) {
                double acc = 0.0;
                for (std::size_t q = 0; q < phi.size(); ++q) acc += jc.W[g][q] * phi[q];
                r.Z[g] = acc;
            }
        }
        if (!sc_.fault_term.empty()) {
            double f = sc_.fault_scale;
            if (sc_.fault_term == "term_sigma") r.sigma *= f;
            else if (sc_.fault_term == "term_jumpsum") r.jump *= f;
            else if (sc_.fault_term == "term_nu") r.nu *= f;
            else if (sc_.fault_term == "term_L") for (auto& v : r.L) v *= f;
            else if (sc_.fault_term == "term_lambda") for (auto& v : r.Y) v *= f;
            else if (sc_.fault_term == "lhs") r.lhs *= f;
            else throw ConfigError("unknown fault term '" + sc_.fault_term + "'");
        }
        return r;
    }

    const ScenarioSpec& spec() const { return sc_; }
    const std::vector<TestFunctional>& functionals() const { return gs_; }

private:
    ScenarioSpec sc_;
    std::vector<TestFunctional> gs_;
    bool diag_zero_ = false, has_jumps_ = false;
    Level fine_, coarse_;
    ItoLattice base_, dbl_;
    std::vector<LambdaWeights> lw_base_, lw_dbl_;
    std::vector<Tilt> tilts_;
    JumpCompLattice jc_base_, jc_dbl_;
};

struct Moments {
    double mean = 0.0, se = 0.0;
};

inline Moments weighted_moments(const std::vector<double>& x) {
    Moments m;
    m.mean = sample_mean(x);
    m.se = jackknife_se(x);
    return m;
}

inline double residual_of(const PathRecord& r, std::size_t g, bool expectation) {
    double res = r.lhs - r.sigma - r.jump - r.nu;
    if (!expectation) res -= r.L[g] + r.Y[g];
    return res;
}

// S((d/dx)^n G(M(t)))(g); nullopt when no deterministic route exists
inline std::optional<QuadResult<double>> s_derivative_of_M(const SmoothTestFunction& G, int n, const CFEngine& e,
                                                           double t) {
    if (G.has_fourier()) {
        if (t == 0.0) {
            double v = n == 0 ? G.G(0.0) : n == 1 ? G.dG(0.0) : G.d2G(0.0);
            return QuadResult<double>{v, 0.0};
        }
        return fourier_pair(
            G,
            [&](double u) {
                auto c = e.cf(t, u);
                cplx f = std::pow(cplx(0.0, u), n);
                return QuadResult<cplx>{c.value * f, c.error * std::abs(f)};
            },
            e.options().q);
    }
    std::vector<double> c = G.c;
    for (int k = 0; k < n && !c.empty(); ++k) {
        for (std::size_t i = 1; i < c.size(); ++i) c[i - 1] = double(i) * c[i];
        c.pop_back();
    }
    if (c.empty()) return QuadResult<double>{0.0, 0.0};
    if (c.size() == 1) return QuadResult<double>{c[0], 0.0};
    try {
        return s_G_of_M(polynomial(c), e, t);
    } catch (const ConfigError&) {
        return std::nullopt;
    }
}

// Checks lhs, term_sigma, term_L (and the jump sum through its compensator) against
// deterministic values; the suspect is the worst disagreeing term, otherwise whichever
// lattice term is left unchecked.
inline void attribute(ItoTermSet& ts, const Engine& eng, const SmoothTestFunction& G, const TestFunctional& g) {
    const auto& sc = eng.spec();
    QuadratureSpec q = sc.quad;
    q.tail_cutoff = sc.A;
    CFOptions cfo;
    cfo.q = q;
    CFEngine cf(sc.kernel, sc.model, g, cfo);
    // fixed graded rules in t; the coarse rule's disagreement is the error
    auto t_integral = [&](auto&& fn) {
        auto apply = [&](int panels) {
            Rule r = power_rule(0.0, sc.T, 2.0, panels, 8);
            double acc = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) acc += r.w[i] * fn(r.x[i]);
            return acc;
        };
        double fine = apply(2);
        return QuadResult<double>{fine, std::abs(fine - apply(1))};
    };
    auto check = [&](const std::string& name, const TermValue& t, double exact, double err) {
        CrossCheck c;
        c.present = true;
        c.difference = t.value - exact;
        c.budget = 3.0 * t.std_error + t.quad + t.discretisation + err;
        c.pass = std::abs(c.difference) <= c.budget;
        ts.term_checks[name] = c;
    };
    if (auto l = s_derivative_of_M(G, 0, cf, sc.T)) check("lhs", ts.lhs, l->value - G.G(0.0), l->error);
    double s_eff = effective_sigma(sc.model);
    if (s_eff > 0.0) {
        double err = 0.0;
        bool ok = true;
        auto integrand = [&](double t) {
            if (t <= 0.0 || !ok) return 0.0;
            auto d = s_derivative_of_M(G, 2, cf, t);
            if (!d) {
                ok = false;
                return 0.0;
            }
            auto dv = ddt_l2_norm_sq(sc.kernel, t, q);
            err = std::max(err, d->error * std::abs(dv.value) + std::abs(d->value) * dv.error);
            return d->value * dv.value;
        };
        auto r = t_integral(integrand);
        if (ok) check("term_sigma", ts.term_sigma, 0.5 * s_eff * s_eff * r.value, 0.5 * s_eff * s_eff * (r.error + err * sc.T));
    } else {
        check("term_sigma", ts.term_sigma, 0.0, 0.0);
    }
    if (ts.mode == "stransform" && !eng.diag_zero()) {
        Tilt rho(sc.model, g);
        double err = 0.0;
        bool ok = true;
        auto integrand = [&](double t) {
            if (!ok) return 0.0;
            auto d = s_derivative_of_M(G, 1, cf, t);
            if (!d) {
                ok = false;
                return 0.0;
            }
            double a = sc.kernel.diag(t) * rho(t);
            err = std::max(err, std::abs(a) * d->error);
            return a * d->value;
        };
        auto r = t_integral(integrand);
        if (ok) check("term_L", ts.term_L, r.value, r.error + err * sc.T);
    }
    if (ts.jumpsum_check.present) ts.term_checks["term_jumpsum"] = ts.jumpsum_check;

    double worst = 1.0;
    for (auto& [name, c] : ts.term_checks) {
        double ratio = c.budget > 0.0 ? std::abs(c.difference) / c.budget : (c.difference == 0.0 ? 0.0 : inf);
        if (ratio > worst) {
            worst = ratio;
            ts.suspect = name;
        }
    }
    if (!ts.suspect.empty()) return;
    std::vector<std::pair<std::string, double>> open;
    auto consider = [&](const std::string& name, const TermValue& t) {
        if (!ts.term_checks.count(name) && t.value != 0.0) open.push_back({name, t.value});
    };
    consider("lhs", ts.lhs);
    consider("term_sigma", ts.term_sigma);
    consider("term_jumpsum", ts.term_jumpsum);
    consider("term_nu", ts.term_nu);
    consider("term_L", ts.term_L);
    consider("term_lambda", ts.term_lambda);
    // several unchecked terms: the one closest in size to the residual
    double score = inf, r = std::abs(ts.residual.value);
    for (auto& [name, v] : open) {
        double sc2 = r > 0.0 ? std::abs(std::log(r / std::abs(v))) : 0.0;
        if (sc2 < score) {
            score = sc2;
            ts.suspect = name;
        }
    }
}

// Aggregates records into term sets, one per functional.
inline std::vector<ItoTermSet> summarise(const Engine& eng, const SmoothTestFunction& G, bool expectation) {
    const auto& sc = eng.spec();
    const auto& gs = eng.functionals();
    const std::size_t n = sc.n_paths, nc = std::min(sc.check_paths, sc.n_paths), ng = gs.size();
    auto main = parallel_map<PathRecord>(n, sc.workers, [&](std::size_t i) { return eng.record(G, i, false, false); });
    auto dbl = parallel_map<PathRecord>(nc, sc.workers, [&](std::size_t i) { return eng.record(G, i, false, true); });
    auto crs = parallel_map<PathRecord>(nc, sc.workers, [&](std::size_t i) { return eng.record(G, i, true, false); });

    std::vector<ItoTermSet> out;
    for (std::size_t g = 0; g < ng; ++g) {
        ItoTermSet ts;
        ts.mode = expectation ? "expectation" : "stransform";
        ts.scenario = sc.name;
        ts.kernel = sc.kernel.label;
        ts.G = G.name;
        ts.g = expectation ? "" : gs[g].name;
        ts.n_paths = n;
        auto col = [&](const std::vector<PathRecord>& rs, auto&& fn) {
            std::vector<double> v(rs.size());
            for (std::size_t i = 0; i < rs.size(); ++i) v[i] = rs[i].w[g] * fn(rs[i]);
            return v;
        };
        std::vector<PathRecord> main_sub(main.begin(), main.begin() + nc);
        // mean over the check subset of a difference between two record sets
        auto diff = [&](const std::vector<PathRecord>& a, const std::vector<PathRecord>& b, auto&& fn) {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) acc += a[i].w[g] * fn(a[i]) - b[i].w[g] * fn(b[i]);
            return a.empty() ? 0.0 : std::abs(acc / a.size());
        };
        auto fill = [&](TermValue& t, auto&& fn) {
            auto m = weighted_moments(col(main, fn));
            t.value = m.mean;
            t.std_error = m.se;
            t.discretisation = diff(main_sub, crs, fn);
        };

        fill(ts.lhs, [](const PathRecord& r) { return r.lhs; });
        fill(ts.term_sigma, [](const PathRecord& r) { return r.sigma; });
        fill(ts.term_jumpsum, [](const PathRecord& r) { return r.jump; });
        fill(ts.term_nu, [](const PathRecord& r) { return r.nu; });
        if (eng.lattice_empty()) ts.term_nu.note = "df/dt = 0";
        else ts.term_nu.quad = diff(main_sub, dbl, [](const PathRecord& r) { return r.nu; });
        if (expectation) {
            ts.term_L.note = "zero mean: Ito integral of a predictable integrand";
            ts.term_lambda.note = "zero mean: S-transform at g = 0 vanishes";
        } else {
            fill(ts.term_L, [&](const PathRecord& r) { return r.L[g]; });
            fill(ts.term_lambda, [&](const PathRecord& r) { return r.Y[g]; });
            if (!eng.lattice_empty()) ts.term_lambda.quad = diff(main_sub, dbl, [&](const PathRecord& r) { return r.Y[g]; });
            if (eng.diag_zero()) ts.term_L.note = "f(t,t) = 0";
        }
        auto res = [&](const PathRecord& r) { return residual_of(r, g, expectation); };
        fill(ts.residual, res);
        ts.residual.quad = ts.term_nu.quad + ts.term_lambda.quad;
        ts.discretisation = ts.residual.discretisation;
        ts.budget = 3.0 * ts.residual.std_error + ts.residual.quad + ts.discretisation;
        ts.pass = std::abs(ts.residual.value) <= ts.budget;

        std::vector<double> w(n), j2(n);
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = main[i].w[g];
            j2[i] = main[i].jump * main[i].jump;
        }
        ts.weights = weight_diagnostics(w);
        ts.jumpsum_second_moment = sample_mean(j2);
        if (!std::isfinite(ts.jumpsum_second_moment)) ts.notes.push_back("jump sum second moment is not finite");

        if (eng.has_jump_check()) {
            auto d = [&](const PathRecord& r) { return r.jump - r.Z[g]; };
            auto m = weighted_moments(col(main, d));
            double quad = diff(main_sub, dbl, [&](const PathRecord& r) { return r.Z[g]; });
            ts.jumpsum_check.present = true;
            ts.jumpsum_check.difference = m.mean;
            ts.jumpsum_check.budget = 3.0 * m.se + quad + diff(main_sub, crs, d);
            ts.jumpsum_check.pass = std::abs(m.mean) <= ts.jumpsum_check.budget;
        }
        if (!expectation) {
            QuadratureSpec q = sc.quad;
            q.tail_cutoff = sc.A;
            CFOptions cfo;
            cfo.q = q;
            CFEngine cf(sc.kernel, sc.model, gs[g], cfo);
            auto f = s_G_of_M(G, cf, sc.T);
            ts.lhs_fourier.value = f.value - G.G(0.0);
            ts.lhs_fourier.quad = f.error;
            ts.lhs_oracles.present = true;
            ts.lhs_oracles.difference = ts.lhs.value - ts.lhs_fourier.value;
            ts.lhs_oracles.budget = 3.0 * ts.lhs.std_error + f.error + ts.lhs.discretisation;
            ts.lhs_oracles.pass = std::abs(ts.lhs_oracles.difference) <= ts.lhs_oracles.budget;
        }
        if (!ts.pass) attribute(ts, eng, G, gs[g]);
        out.push_back(std::move(ts));
    }
    return out;
}

}  // namespace detail

// E of every term with g = 0; the L- and Lambda-terms have zero mean and are not sampled.
inline ItoTermSet eval_terms_expectation(const SmoothTestFunction& G, const ScenarioSpec& sc) {
    auto gate = moment_gate(G, sc.kernel, sc.model, sc.T);
    if (!gate.pass)
        throw ConfigError("moment gate failed: L(1) needs a finite moment of order " + std::to_string(gate.order));
    detail::Engine eng(sc, {zero_functional()});
    auto out = detail::summarise(eng, G, true);
    out[0].notes.push_back("moment gate order " + std::to_string(static_cast<int>(gate.order)) + " (" + gate.note + ")");
    if (G.kind == GKind::Polynomial && sc.model.sigma == 0.0)
        out[0].notes.push_back("polynomial G without a Gaussian component");
    return out[0];
}

// S-transform of every term for each g; the LHS is computed twice (Fourier route and weighted MC).
inline std::vector<ItoTermSet> eval_terms_stransform(const SmoothTestFunction& G, const ScenarioSpec& sc,
                                                     const std::vector<TestFunctional>& gs) {
    require(!gs.empty(), "S-transform mode needs at least one test functional");
    auto gate = moment_gate(G, sc.kernel, sc.model, sc.T);
    if (!gate.pass)
        throw ConfigError("moment gate failed: L(1) needs a finite moment of order " + std::to_string(gate.order));
    if (!G.has_fourier()) detail::check_polynomial_route(G, sc.model);
    for (auto& g : gs) validate(g);
    detail::Engine eng(sc, gs);
    auto out = detail::summarise(eng, G, false);
    for (auto& ts : out) {
        if (ts.weights.variance > 10.0)
            throw NumericalFailure("weight variance " + std::to_string(ts.weights.variance) + " exceeds 10 for " + ts.g);
        ts.notes.push_back("term_L in compensator form: int S(G'(M(t))) f(t,t) rho(t) dt");
    }
    return out;
}

// ------------------------------------------------------------ connection check

struct ConnectionResult {
    std::string g;
    double lhs = 0.0, lhs_error = 0.0;      // int Re cf(t,1) d/dt S(M(t)) dt
    double lhs_mc = 0.0, lhs_mc_se = 0.0;   // weighted MC of int cos(M(t)) d/dt S(M(t)) dt
    double rhs = 0.0, rhs_se = 0.0;         // weighted MC of int rho(s) int df/dt cos(M(t)) dt ds
    double quad = 0.0, discretisation = 0.0, budget = 0.0;
    bool pass = false;
};

inline nlohmann::json to_json(const ConnectionResult& c) {
    return {{"g", c.g},          {"lhs", c.lhs},     {"lhs_error", c.lhs_error}, {"lhs_mc", c.lhs_mc},
            {"lhs_mc_se", c.lhs_mc_se}, {"rhs", c.rhs}, {"rhs_se", c.rhs_se},   {"quad", c.quad},
            {"discretisation", c.discretisation}, {"budget", c.budget}, {"pass", c.pass}};
}

// For X(t) = cos(M(t-)): S of int X dM-diamond against S of the Lambda-term rewrite.
inline std::vector<ConnectionResult> connection_check(const ScenarioSpec& sc, const std::vector<TestFunctional>& gs) {
    require(!gs.empty(), "connection check needs at least one test functional");
    if (!detail::diag_vanishes(sc.kernel, sc.T))
        throw ConfigError("connection check is implemented for kernels with f(t,t) = 0");
    detail::Engine eng(sc, gs);
    QuadratureSpec q = sc.quad;
    q.tail_cutoff = sc.A;
    // t-rule for the left side, graded toward 0 like the lattice rows
    double p = std::max(1.0, sc.kernel.diag_grading);
    Rule y = gl_rule(0.0, 1.0, 2, sc.lattice.t_order);
    std::vector<double> tt, wt;
    for (std::size_t i = 0; i < y.size(); ++i) {
        tt.push_back(sc.T * std::pow(y.x[i], p));
        wt.push_back(y.w[i] * sc.T * p * std::pow(y.x[i], p - 1.0));
    }
    std::vector<std::vector<double>> dsm(gs.size());
    std::vector<Tilt> tilts;
    for (std::size_t g = 0; g < gs.size(); ++g) {
        tilts.emplace_back(sc.model, gs[g]);
        for (double t : tt) dsm[g].push_back(ddt_s_M(sc.kernel, tilts[g], t, q).value);
    }
    struct Rec {
        std::vector<double> w, lhs, rhs;
    };
    auto rec = [&](std::size_t i, bool coarse, bool doubled) {
        auto [lp, vp] = eng.paths(i, coarse);
        const auto& lat = eng.lattice(doubled);
        auto e = lat.eval([](double m) { return std::cos(m); }, lat.path_values(vp), false);
        std::vector<double> cosm;
        for (double t : tt) cosm.push_back(std::cos(vp.left_at(t)));
        Rec r;
        for (std::size_t g = 0; g < gs.size(); ++g) {
            r.w.push_back(eng.level(coarse).weights[g](lp));
            double a = 0.0, b = 0.0;
            for (std::size_t k = 0; k < tt.size(); ++k) a += wt[k] * cosm[k] * dsm[g][k];
            const auto& rho = eng.lambda(doubled)[g].rho;
            for (std::size_t s = 0; s < e.X0.size(); ++s) b += rho[s] * e.X0[s];
            r.lhs.push_back(a);
            r.rhs.push_back(b);
        }
        return r;
    };
    const std::size_t n = sc.n_paths, nc = std::min(sc.check_paths, n);
    auto main = parallel_map<Rec>(n, sc.workers, [&](std::size_t i) { return rec(i, false, false); });
    auto dbl = parallel_map<Rec>(nc, sc.workers, [&](std::size_t i) { return rec(i, false, true); });
    auto crs = parallel_map<Rec>(nc, sc.workers, [&](std::size_t i) { return rec(i, true, false); });
    std::vector<ConnectionResult> out;
    CFOptions cfo;
    cfo.q = q;
    for (std::size_t g = 0; g < gs.size(); ++g) {
        ConnectionResult c;
        c.g = gs[g].name;
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = main[i].w[g] * main[i].lhs[g];
            b[i] = main[i].w[g] * main[i].rhs[g];
        }
        c.lhs_mc = sample_mean(a);
        c.lhs_mc_se = jackknife_se(a);
        c.rhs = sample_mean(b);
        c.rhs_se = jackknife_se(b);
        CFEngine cf(sc.kernel, sc.model, gs[g], cfo);
        Tilt& rho = tilts[g];
        double err = 0.0;
        auto integrand = [&](double t) {
            if (t <= 0.0) return 0.0;
            auto c1 = cf.cf(t, 1.0);
            auto d = ddt_s_M(sc.kernel, rho, t, q);
            err = std::max(err, c1.error * std::abs(d.value) + std::abs(c1.value) * d.error);
            return c1.value.real() * d.value;
        };
        QuadratureSpec qo = q;
        qo.abs_tol = 1e-9;
        qo.rel_tol = 1e-8;
        auto L = gauss_kronrod(integrand, 0.0, sc.T, qo);
        c.lhs = L.value;
        c.lhs_error = L.error + err * sc.T;
        double dq = 0.0, dd = 0.0;
        for (std::size_t i = 0; i < nc; ++i) {
            dq += main[i].w[g] * main[i].rhs[g] - dbl[i].w[g] * dbl[i].rhs[g];
            dd += main[i].w[g] * main[i].rhs[g] - crs[i].w[g] * crs[i].rhs[g];
        }
        c.quad = nc ? std::abs(dq / nc) : 0.0;
        c.discretisation = nc ? std::abs(dd / nc) : 0.0;
        c.budget = 3.0 * c.rhs_se + c.lhs_error + c.quad + c.discretisation;
        c.pass = std::abs(c.lhs - c.rhs) <= c.budget;
        out.push_back(c);
    }
    return out;
}

// ------------------------------------------------------------ report

struct VerificationReport {
    std::vector<ItoTermSet> cells;
    bool pass = true;
    std::vector<std::string> failures;
    std::map<std::string, double> stransform_pass_fraction;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["verdict"] = pass ? "PASS" : "FAIL";
        j["failures"] = failures;
        for (const char* mode : {"pathwise", "expectation", "stransform"}) {
            nlohmann::json arr = nlohmann::json::array();
            for (auto& c : cells)
                if (c.mode == mode) arr.push_back(lvv::to_json(c));
            if (!arr.empty()) j["modes"][mode] = arr;
        }
        if (!stransform_pass_fraction.empty()) j["stransform_pass_fraction"] = stransform_pass_fraction.at("all");
        return j;
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "verdict: " << (pass ? "PASS" : "FAIL") << '\n';
        os << std::left << std::setw(12) << "mode" << std::setw(44) << "cell" << std::right << std::setw(14)
           << "residual" << std::setw(14) << "budget" << std::setw(8) << "ratio" << "  verdict\n";
        os << std::scientific << std::setprecision(3);
        for (auto& c : cells) {
            double ratio = c.budget > 0.0 ? std::abs(c.residual.value) / c.budget : (c.residual.value == 0.0 ? 0.0 : inf);
            os << std::left << std::setw(12) << c.mode << std::setw(44) << c.cell() << std::right << std::setw(14)
               << c.residual.value << std::setw(14) << c.budget << std::setw(8) << std::fixed << std::setprecision(2)
               << ratio << std::scientific << std::setprecision(3) << "  " << (c.pass ? "pass" : "FAIL") << '\n';
            if (c.lhs_oracles.present)
                os << "    lhs oracles: diff " << c.lhs_oracles.difference << " budget " << c.lhs_oracles.budget << ' '
                   << (c.lhs_oracles.pass ? "pass" : "FAIL") << '\n';
            if (c.jumpsum_check.present)
                os << "    jump-sum compensator: diff " << c.jumpsum_check.difference << " budget "
                   << c.jumpsum_check.budget << ' ' << (c.jumpsum_check.pass ? "pass" : "FAIL") << '\n';
        }
        for (auto& f : failures) os << "failure: " << f << '\n';
        return os.str();
    }

    void write_terms_csv(std::ostream& os) const {
        os << "mode,cell,term,value,std_error,quad,budget\n";
        os.precision(10);
        for (auto& c : cells) {
            auto row = [&](const char* name, const TermValue& t, double budget) {
                os << c.mode << ',' << c.cell() << ',' << name << ',' << t.value << ',' << t.std_error << ',' << t.quad
                   << ',' << budget << '\n';
            };
            row("lhs", c.lhs, 0.0);
            row("term_sigma", c.term_sigma, 0.0);
            row("term_jumpsum", c.term_jumpsum, 0.0);
            row("term_nu", c.term_nu, 0.0);
            row("term_L", c.term_L, 0.0);
            if (c.lambda_present) row("term_lambda", c.term_lambda, 0.0);
            row("residual", c.residual, c.budget);
        }
    }
};

namespace detail {

// the term whose magnitude best matches the unexplained residual
inline std::string suspect_term(const ItoTermSet& c) {
    if (!c.suspect.empty()) return c.suspect;
    std::vector<std::pair<std::string, double>> terms{{"term_sigma", c.term_sigma.value},
                                                      {"term_jumpsum", c.term_jumpsum.value},
                                                      {"term_nu", c.term_nu.value},
                                                      {"term_L", c.term_L.value},
                                                      {"lhs", c.lhs.value}};
    if (c.lambda_present) terms.push_back({"term_lambda", c.term_lambda.value});
    std::string best = "residual";
    double score = inf, r = std::abs(c.residual.value);
    for (auto& [name, v] : terms) {
        if (v == 0.0 || r == 0.0) continue;
        double s = std::abs(std::log(r / std::abs(v)));
        if (s < score) {
            score = s;
            best = name;
        }
    }
    return best;
}

}  // namespace detail

// Pathwise and expectation cells must all pass; S-transform cells need >= 95% residual
// passes and every LHS oracle pair in agreement.
inline VerificationReport verification_report(const std::vector<ItoTermSet>& cells) {
    require(!cells.empty(), "verification report needs at least one cell");
    VerificationReport rep;
    rep.cells = cells;
    std::size_t n_s = 0, pass_s = 0;
    for (auto& c : cells) {
        if (c.mode == "stransform") {
            ++n_s;
            if (c.pass) ++pass_s;
            else rep.failures.push_back(c.cell() + ": residual exceeds budget, suspect " + detail::suspect_term(c));
            if (c.lhs_oracles.present && !c.lhs_oracles.pass) {
                rep.pass = false;
                rep.failures.push_back(c.cell() + ": LHS oracles disagree");
            }
        } else if (!c.pass) {
            rep.pass = false;
            rep.failures.push_back(c.cell() + ": residual exceeds budget, suspect " + detail::suspect_term(c));
        }
        if (c.jumpsum_check.present && !c.jumpsum_check.pass) {
            rep.pass = false;
            rep.failures.push_back(c.cell() + ": term_jumpsum disagrees with its compensator");
        }
    }
    if (n_s > 0) {
        double frac = double(pass_s) / double(n_s);
        rep.stransform_pass_fraction["all"] = frac;
        if (frac < 0.95) rep.pass = false;
    }
    return rep;
}

// Pathwise refinement study as a report cell: residual is the RMS at the coarsest
// level and the budget 5% of RMS(G(M(T))); halving dt must cut the RMS by >= 1.3.
inline ItoTermSet pathwise_cell(const RefinementStudy& st, const std::string& scenario, const std::string& G,
                                std::size_t n_paths) {
    ItoTermSet c;
    c.mode = "pathwise";
    c.scenario = scenario;
    c.kernel = "indicator";
    c.G = G;
    c.lambda_present = false;
    c.n_paths = n_paths;
    c.residual.value = st.rms_residual.front();
    c.budget = 0.05 * st.rms_G;
    bool ratios_ok = std::all_of(st.ratios.begin(), st.ratios.end(), [](double r) { return r >= 1.3; });
    c.pass = c.residual.value <= c.budget && ratios_ok;
    std::ostringstream os;
    os << "rms residual by dt:";
    for (std::size_t i = 0; i < st.dt.size(); ++i) os << ' ' << st.dt[i] << '=' << st.rms_residual[i];
    c.notes.push_back(os.str());
    if (!ratios_ok) c.notes.push_back("refinement ratio below 1.3");
    return c;
}

}  // namespace lvv
