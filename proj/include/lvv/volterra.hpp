#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "kernels.hpp"
#include "levy.hpp"

namespace lvv {

struct MJump {
    double time;
    double size;  // f(t,t) times the driver jump
};

// M on [0,T] at the grid nodes plus every driver jump time in (0,T].
struct VolterraPath {
    std::vector<double> times;
    std::vector<double> values;
    std::vector<double> left_limits;
    std::vector<char> is_node;
    std::vector<std::size_t> node_index;  // position of grid node i in `times`
    std::vector<MJump> jumps;
    std::string kernel_label;
    std::uint64_t seed = 0;
    double A = 0.0, T = 0.0;

    std::size_t size() const { return times.size(); }
    double at_node(std::size_t i) const { return values[node_index[i]]; }
    double terminal() const { return values.back(); }

    // M(t-) for t in (0,T]: linear between M(t_k) and M(t_{k+1}-), no jumps in between
    double left_at(double t) const {
        if (t <= times.front()) return values.front();
        auto it = std::lower_bound(times.begin(), times.end(), t);
        std::size_t k = static_cast<std::size_t>(it - times.begin());
        if (k >= times.size()) return values.back();
        if (times[k] == t) return left_limits[k];
        double a = times[k - 1], b = times[k];
        double w = (t - a) / (b - a);
        return values[k - 1] + w * (left_limits[k] - values[k - 1]);
    }
};

struct VolterraOptions {
    // far-past jumps (s < -far_start) enter through a Chebyshev interpolant in t
    double far_start = 2.0;
    int cheb_nodes = 12;
    double cheb_tol = 1e-12;
};

// Precomputes the cell-average matrix of f against the grid, then maps driver paths to M-paths.
class VolterraSimulator {
public:
    VolterraSimulator(KernelHandle k, TimeGrid grid, VolterraOptions opt = {})
        : k_(std::move(k)), g_(std::move(grid)), opt_(opt) {
        indicator_ = k_.label == "indicator";
        const std::size_t z = g_.zero_index, n = g_.n_positive_cells(), nc = g_.n_cells();
        if (!indicator_) {
            C_.assign((n + 1) * nc, 0.0);
            for (std::size_t i = 0; i <= n; ++i) {
                double t = g_.nodes[z + i];
                for (std::size_t j = 0; j < z + i; ++j) C_[i * nc + j] = cell_average(t, j);
            }
        }
        F_.assign(n + 1, 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            double acc = 0.0;
            if (indicator_) {
                for (std::size_t j = z; j < z + i; ++j) acc += g_.width(j);
            } else {
                for (std::size_t j = 0; j < nc; ++j) acc += C_[i * nc + j] * g_.width(j);
            }
            F_[i] = acc;
        }
        setup_far_field();
    }

    const KernelHandle& kernel() const { return k_; }
    const TimeGrid& grid() const { return g_; }
    bool uses_far_field() const { return far_; }
    // int f(t_i, s) ds over the window, i.e. the compensator factor at node i
    double window_integral(std::size_t i) const { return F_[i]; }
    // cell average of f(t_i, .) over cell j
    double weight(std::size_t i, std::size_t j) const {
        if (indicator_) return (j >= g_.zero_index && j < g_.zero_index + i) ? 1.0 : 0.0;
        return C_[i * g_.n_cells() + j];
    }

    VolterraPath simulate(const LevyPath& lp) const {
        require(lp.grid == g_, "driver path grid does not match the simulator grid");
        const std::size_t z = g_.zero_index, n = g_.n_positive_cells(), nc = g_.n_cells();
        // continuous part at nodes
        std::vector<double> gs(n + 1, 0.0);
        if (indicator_) {
            double acc = 0.0;
            for (std::size_t i = 0; i <= n; ++i) {
                if (i > 0) acc += lp.dW[z + i - 1];
                gs[i] = acc;
            }
        } else {
            for (std::size_t i = 0; i <= n; ++i) {
                const double* row = &C_[i * nc];
                double acc = 0.0;
                for (std::size_t j = 0; j < z + i; ++j) acc += row[j] * lp.dW[j];
                gs[i] = acc;
            }
        }
        // jumps: near ones evaluated directly, far ones through the interpolant
        std::vector<Jump> near;
        std::vector<Jump> far_list;
        for (auto& jp : lp.jumps) {
            if (jp.time < k_.tau) continue;
            if (far_ && jp.time < -opt_.far_start) far_list.push_back(jp);
            else near.push_back(jp);
        }
        std::vector<double> far_vals;
        if (!far_list.empty()) {
            far_vals.resize(cheb_t_.size());
            for (std::size_t m = 0; m < cheb_t_.size(); ++m) {
                double t = cheb_t_[m], acc = 0.0;
                for (auto& jp : far_list) acc += k_.f3(t, jp.time, t - jp.time) * jp.size;
                far_vals[m] = acc;
            }
        }
        auto jump_part = [&](double t, bool left) {
            double acc = 0.0;
            for (auto& jp : near) {
                if (jp.time > t || (left && jp.time == t)) break;
                acc += k_.f3(t, jp.time, t - jp.time) * jp.size;
            }
            if (!far_vals.empty()) acc += cheb_eval(far_vals, t);
            return acc;
        };

        VolterraPath vp;
        vp.kernel_label = k_.label;
        vp.seed = lp.seed;
        vp.A = g_.A;
        vp.T = g_.T;
        auto jt = std::upper_bound(lp.jumps.begin(), lp.jumps.end(), 0.0, [](double v, const Jump& j) { return v < j.time; });
        for (std::size_t i = 0; i <= n; ++i) {
            double t = g_.nodes[z + i];
            // driver jumps inside (t_{i-1}, t_i)
            if (i > 0) {
                double a = g_.nodes[z + i - 1];
                for (; jt != lp.jumps.end() && jt->time < t; ++jt) {
                    double s = jt->time;
                    double w = (s - a) / (t - a);
                    double c0 = lp.sigma * gs[i - 1] - lp.drift * F_[i - 1];
                    double c1 = lp.sigma * gs[i] - lp.drift * F_[i];
                    double left = c0 + w * (c1 - c0) + jump_part(s, true);
                    double dm = k_.diag(s) * jt->size;
                    vp.times.push_back(s);
                    vp.left_limits.push_back(left);
                    vp.values.push_back(left + dm);
                    vp.is_node.push_back(0);
                    vp.jumps.push_back({s, dm});
                }
            }
            double js = jump_part(t, false);
            double v = lp.sigma * gs[i] + js - lp.drift * F_[i];
            vp.node_index.push_back(vp.times.size());
            vp.times.push_back(t);
            vp.values.push_back(v);
            vp.left_limits.push_back(v);
            vp.is_node.push_back(1);
        }
        return vp;
    }

private:
    double cell_average(double t, std::size_t j) const {
        double a = g_.nodes[j], b = g_.nodes[j + 1];
        if (a < k_.tau) a = std::min(b, k_.tau);
        if (!(b > a)) return 0.0;
        if (k_.integral) return k_.integral(t, a, b) / g_.width(j);
        QuadratureSpec q;
        q.abs_tol = 1e-14;
        q.rel_tol = 1e-12;
        auto r = gauss_kronrod([&](double s) { return k_.f3(t, s, t - s); }, a, b, q);
        return r.value / g_.width(j);
    }

    void setup_far_field() {
        far_ = false;
        if (!(k_.tau < -opt_.far_start) || g_.A <= opt_.far_start) return;
        const double T = g_.T;
        for (int K = opt_.cheb_nodes; K <= 48; K += 6) {
            cheb_t_.resize(K + 1);
            for (int m = 0; m <= K; ++m) cheb_t_[m] = 0.5 * T * (1.0 - std::cos(pi * m / K));
            cheb_t_.front() = 0.0;
            cheb_t_.back() = T;
            // the interpolant must reproduce f(., s) on the worst far-past column
            bool ok = true;
            for (double s : {-opt_.far_start, -0.5 * (opt_.far_start + g_.A), -g_.A}) {
                std::vector<double> vals(K + 1);
                double scale = 0.0;
                for (int m = 0; m <= K; ++m) {
                    vals[m] = k_.f3(cheb_t_[m], s, cheb_t_[m] - s);
                    scale = std::max(scale, std::abs(vals[m]));
                }
                for (int r = 0; r < 97; ++r) {
                    double t = T * (r + 0.37) / 97.0;
                    double err = std::abs(cheb_eval(vals, t) - k_.f3(t, s, t - s));
                    if (err > opt_.cheb_tol * std::max(scale, 1e-300)) ok = false;
                }
            }
            if (ok) {
                far_ = true;
                return;
            }
        }
        cheb_t_.clear();
    }

    // barycentric interpolation on Chebyshev-Lobatto nodes
    double cheb_eval(const std::vector<double>& vals, double t) const {
        std::size_t K = cheb_t_.size() - 1;
        double num = 0.0, den = 0.0;
        for (std::size_t m = 0; m <= K; ++m) {
            double dt = t - cheb_t_[m];
            if (dt == 0.0) return vals[m];
            double w = (m % 2 == 0 ? 1.0 : -1.0) * ((m == 0 || m == K) ? 0.5 : 1.0) / dt;
            num += w * vals[m];
            den += w;
        }
        return num / den;
    }

    KernelHandle k_;
    TimeGrid g_;
    VolterraOptions opt_;
    bool indicator_ = false;
    std::vector<double> C_, F_;
    bool far_ = false;
    std::vector<double> cheb_t_;
};

inline VolterraPath simulate_M(const KernelHandle& k, const LevyPath& lp) {
    return VolterraSimulator(k, lp.grid).simulate(lp);
}

struct MomentEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
};

// E sup_t |M(t)|^p over the recorded points, with its standard error
inline MomentEstimate moment_estimate(const std::vector<VolterraPath>& paths, double p) {
    if (paths.empty()) throw std::invalid_argument("moment_estimate needs at least one path");
    require(p >= 2.0, "moment order must be >= 2");
    std::vector<double> v;
    v.reserve(paths.size());
    for (auto& vp : paths) {
        double m = 0.0;
        for (std::size_t i = 0; i < vp.size(); ++i) m = std::max({m, std::abs(vp.values[i]), std::abs(vp.left_limits[i])});
        v.push_back(std::pow(m, p));
    }
    MomentEstimate out;
    out.n = v.size();
    for (double x : v) out.value += x;
    out.value /= v.size();
    if (v.size() > 1) {
        double s2 = 0.0;
        for (double x : v) s2 += (x - out.value) * (x - out.value);
        out.std_error = std::sqrt(s2 / (v.size() - 1) / v.size());
    }
    return out;
}

inline void write_csv(const VolterraPath& vp, std::ostream& os) {
    os << "time,M,M_left,is_jump,jump_size\n";
    os.precision(17);
    std::size_t jk = 0;
    for (std::size_t i = 0; i < vp.size(); ++i) {
        bool jump = !vp.is_node[i];
        double size = 0.0;
        if (jump) size = vp.jumps[jk++].size;
        os << vp.times[i] << ',' << vp.values[i] << ',' << vp.left_limits[i] << ',' << (jump ? 1 : 0) << ',' << size
           << '\n';
    }
}

}  // namespace lvv
