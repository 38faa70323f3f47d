#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <lvv/config.hpp>

namespace fs = std::filesystem;
using namespace lvv;

namespace {

enum Exit { Pass = 0, Fail = 1, Usage = 2, Numerical = 3 };

struct Options {
    std::string config;
    std::vector<std::string> set;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool deterministic = false;
    std::string out_dir = "runs";
    std::optional<std::string> kernel, nu;
    std::optional<double> sigma, t;
};

Json resolve(const Options& o) {
    auto overrides = o.set;
    if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
    if (o.workers) overrides.push_back("workers=" + std::to_string(*o.workers));
    if (o.deterministic) overrides.push_back("deterministic=true");
    if (o.kernel) overrides.push_back("kernel=" + *o.kernel);
    if (o.nu) overrides.push_back("model.nu=" + *o.nu);
    if (o.sigma) overrides.push_back("model.sigma=" + Json(*o.sigma).dump());
    if (o.t) overrides.push_back("charfn.t=[" + Json(*o.t).dump() + "]");
    return load_config_file(o.config, overrides);
}

// <out>/<subcommand>-<config hash>-<seed>/ with config.snapshot, report.json, tables/, log.txt
class RunDir {
public:
    RunDir(const std::string& out, const std::string& sub, const Json& cfg) {
        path_ = fs::path(out) / (sub + "-" + config_hash(cfg) + "-" + std::to_string(cfg.at("seed").get<std::uint64_t>()));
        std::error_code ec;
        fs::create_directories(path_ / "tables", ec);
        if (ec) throw ConfigError("cannot create run directory " + path_.string() + ": " + ec.message());
        write("config.snapshot", to_toml(cfg));
        log_.open(path_ / "log.txt");
        log_ << "subcommand " << sub << "\nconfig hash " << config_hash(cfg) << '\n';
    }

    void write(const std::string& rel, const std::string& text) const {
        std::ofstream f(path_ / rel, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + (path_ / rel).string());
        f << text;
    }
    std::ofstream table(const std::string& name) const {
        std::ofstream f(path_ / "tables" / name, std::ios::binary);
        if (!f) throw ConfigError("cannot write table " + name);
        return f;
    }
    void report(const Json& j) const { write("report.json", j.dump(2) + "\n"); }
    std::ostream& log() { return log_; }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    std::ofstream log_;
};

int cmd_simulate(const Json& cfg, RunDir& run) {
    auto k = config_kernel(cfg);
    auto model = config_model(cfg);
    auto grid = config_grid(cfg);
    auto n = cfg.at("simulate").at("n_paths").get<std::size_t>();
    auto seed = cfg.at("seed").get<std::uint64_t>();
    VolterraSimulator sim(k, grid);
    auto paths = parallel_map<VolterraPath>(n, cfg.at("workers").get<int>(), [&](std::size_t i) {
        return sim.simulate(simulate_path(model, grid, substream_seed(seed, i)));
    });
    Json terminal = Json::array();
    for (std::size_t i = 0; i < n; ++i) {
        std::ostringstream name;
        name << "path_" << std::setw(4) << std::setfill('0') << i << ".csv";
        auto f = run.table(name.str());
        write_csv(paths[i], f);
        terminal.push_back(paths[i].terminal());
    }
    double p = cfg.at("simulate").at("moment_order").get<double>();
    Json j{{"kernel", k.label}, {"n_paths", n}, {"terminal", terminal}, {"far_field", sim.uses_far_field()}};
    if (n > 0) {
        auto m = moment_estimate(paths, p);
        j["sup_moment"] = {{"order", p}, {"value", m.value}, {"std_error", m.std_error}};
    }
    run.report(j);
    run.log() << "simulated " << n << " paths\n";
    std::cout << "simulated " << n << " paths of M with kernel " << k.label << '\n';
    return Pass;
}

int cmd_validate_kernel(const Json& cfg, RunDir& run) {
    auto k = config_kernel(cfg);
    auto rep = validate_class_K(k, config_probe(cfg));
    run.report(rep.to_json());
    run.log() << rep.to_text();
    std::cout << rep.to_text();
    return rep.accepted ? Pass : Fail;
}

int cmd_charfn(const Json& cfg, RunDir& run) {
    auto k = config_kernel(cfg);
    auto model = config_model(cfg);
    CFOptions opt;
    opt.q = config_quad(cfg);
    const auto& c = cfg.at("charfn");
    CFEngine e(k, model, parse_functional(c.at("g").get<std::string>()), opt);
    std::vector<double> ts = c.at("t").get<std::vector<double>>();
    int nu = c.at("u_count").get<int>();
    if (nu < 1) throw ConfigError("charfn.u_count must be positive");
    double a = c.at("u_min").get<double>(), b = c.at("u_max").get<double>();
    std::vector<double> us;
    for (int i = 0; i < nu; ++i) us.push_back(nu == 1 ? a : a + (b - a) * i / (nu - 1));
    for (double t : ts)
        if (!(t >= 0.0)) throw ConfigError("charfn.t must be non-negative");
    auto f = run.table("cf.csv");
    write_cf_csv(e, ts, us, f);
    double worst = 0.0;
    Json rows = Json::array();
    for (double t : ts)
        for (double u : us) {
            auto v = e.cf(t, u);
            worst = std::max(worst, v.error);
            rows.push_back({{"t", t}, {"u", u}, {"re", v.value.real()}, {"im", v.value.imag()}, {"error", v.error}});
        }
    run.report({{"kernel", k.label}, {"g", e.functional().name}, {"max_error", worst}, {"values", rows}});
    run.log() << "tabulated " << rows.size() << " values, max error " << worst << '\n';
    std::cout << "cf tabulated at " << rows.size() << " points, max quadrature error " << worst << '\n';
    return Pass;
}

int cmd_stransform(const Json& cfg, RunDir& run) {
    auto k = config_kernel(cfg);
    auto model = config_model(cfg);
    auto grid = config_grid(cfg);
    auto q = config_quad(cfg);
    const auto& c = cfg.at("stransform");
    auto gs = config_functionals(c.at("g"));
    auto G = parse_test_function(c.at("G").get<std::string>());
    auto n = c.at("n_paths").get<std::size_t>();
    if (n < 2) throw ConfigError("stransform.n_paths must be at least 2");
    auto seed = cfg.at("seed").get<std::uint64_t>();
    double T = grid.T;
    std::vector<WeightEngine> we;
    for (auto& g : gs) we.emplace_back(g, model, grid);
    VolterraSimulator sim(k, grid);
    struct Rec {
        double m;
        std::vector<double> w;
    };
    auto recs = parallel_map<Rec>(n, cfg.at("workers").get<int>(), [&](std::size_t i) {
        auto lp = simulate_path(model, grid, substream_seed(seed, i));
        Rec r{sim.simulate(lp).terminal(), {}};
        for (auto& e : we) r.w.push_back(e(lp));
        return r;
    });
    CFOptions opt;
    opt.q = q;
    Json out = Json::array();
    bool pass = true;
    auto f = run.table("stransform.csv");
    f << "g,quantity,mc,std_error,exact,error,pass\n";
    f.precision(12);
    for (std::size_t j = 0; j < gs.size(); ++j) {
        std::vector<double> w(n), m(n), gm(n);
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = recs[i].w[j];
            m[i] = recs[i].m;
            gm[i] = G.G(recs[i].m);
        }
        auto d = weight_diagnostics(w);
        if (d.variance > 10.0)
            throw NumericalFailure("weight variance " + std::to_string(d.variance) + " exceeds 10 for " + gs[j].name);
        CFEngine e(k, model, gs[j], opt);
        auto sm = s_M(k, model, gs[j], T, q);
        auto sg = s_G_of_M(G, e, T);
        Json entry{{"g", gs[j].name},
                   {"weights", {{"mean", d.mean}, {"variance", d.variance}, {"negative_fraction", d.negative_fraction}}}};
        auto check = [&](const std::string& what, const std::vector<double>& phi, double exact, double err) {
            auto est = s_transform_mc(phi, w);
            bool ok = std::abs(est.value - exact) <= 3.0 * est.std_error + err;
            pass = pass && ok;
            entry[what] = {{"mc", to_json(est)}, {"exact", exact}, {"error", err}, {"pass", ok}};
            f << gs[j].name << ',' << what << ',' << est.value << ',' << est.std_error << ',' << exact << ',' << err << ','
              << ok << '\n';
        };
        check("M", m, sm.value, sm.error);
        check("G(M)", gm, sg.value, sg.error);
        out.push_back(entry);
        run.log() << gs[j].name << " weight mean " << d.mean << " variance " << d.variance << '\n';
    }
    run.report({{"verdict", pass ? "PASS" : "FAIL"}, {"G", G.name}, {"kernel", k.label}, {"T", T}, {"estimates", out}});
    std::cout << "S-transform battery: " << (pass ? "PASS" : "FAIL") << '\n';
    return pass ? Pass : Fail;
}

int cmd_verify(const Json& cfg, RunDir& run) {
    auto sc = config_scenario(cfg);
    auto modes = config_modes(cfg, sc.kernel);
    auto Gs = config_test_functions(cfg.at("verify").at("G"));
    auto gs = config_functionals(cfg.at("verify").at("g"));
    auto has = [&](const char* m) { return std::find(modes.begin(), modes.end(), m) != modes.end(); };
    if (has("stransform") && gs.empty()) throw ConfigError("stransform mode needs at least one g");
    std::vector<ItoTermSet> cells;
    for (auto& G : Gs) {
        if (has("pathwise")) {
            const auto& pw = cfg.at("verify").at("pathwise");
            auto st = pathwise_refinement(G, sc.model, sc.T, pw.at("n_fine").get<int>(),
                                          pw.at("factors").get<std::vector<int>>(), pw.at("n_paths").get<std::size_t>(),
                                          sc.seed, sc.workers);
            cells.push_back(pathwise_cell(st, sc.name, G.name, pw.at("n_paths").get<std::size_t>()));
        }
        if (has("expectation")) cells.push_back(eval_terms_expectation(G, sc));
        if (has("stransform"))
            for (auto& c : eval_terms_stransform(G, sc, gs)) cells.push_back(std::move(c));
        run.log() << "G " << G.name << " done\n";
    }
    if (cells.empty()) throw ConfigError("verify.modes selects nothing to run");
    auto rep = verification_report(cells);
    auto j = rep.to_json();
    bool pass = rep.pass;
    if (cfg.at("verify").at("connection").get<bool>()) {
        Json conn = Json::array();
        for (auto& c : connection_check(sc, gs)) {
            conn.push_back(to_json(c));
            if (!c.pass) {
                pass = false;
                j["failures"].push_back("connection check failed for " + c.g);
            }
        }
        j["connection"] = conn;
        j["verdict"] = pass ? "PASS" : "FAIL";
    }
    run.report(j);
    auto f = run.table("terms.csv");
    rep.write_terms_csv(f);
    run.log() << rep.to_text();
    std::cout << rep.to_text();
    return pass ? Pass : Fail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Levy-driven Volterra processes: simulation, S-transforms and Ito formula checks"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config, "TOML configuration file");
    app.add_option("--set", o.set, "override a config key (key=value)")->take_all();
    app.add_option("--seed", o.seed, "master seed");
    app.add_option("--workers", o.workers, "worker threads");
    app.add_flag("--deterministic", o.deterministic, "exact-order reductions");
    app.add_option("--out-dir", o.out_dir, "parent of the run directory")->capture_default_str();
    app.add_option("--kernel", o.kernel, "shorthand for --set kernel=...");
    app.add_option("--sigma", o.sigma, "shorthand for --set model.sigma=...");
    app.add_option("--nu", o.nu, "shorthand for --set model.nu=...");
    app.add_option("--t", o.t, "shorthand for --set charfn.t=[...]");

    using Cmd = int (*)(const Json&, RunDir&);
    std::vector<std::pair<std::string, Cmd>> cmds{{"simulate", cmd_simulate},
                                                  {"validate-kernel", cmd_validate_kernel},
                                                  {"charfn", cmd_charfn},
                                                  {"s-transform", cmd_stransform},
                                                  {"verify-ito", cmd_verify}};
    const char* help[] = {"simulate paths of M and write them as CSV", "probe a kernel for class membership",
                          "tabulate the characteristic function", "weighted Monte Carlo S-transforms vs exact values",
                          "check the generalised Ito formula"};
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < cmds.size(); ++i) subs.push_back(app.add_subcommand(cmds[i].first, help[i]));
    auto ref = app.add_subcommand("config-reference", "print every config key with its default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? Pass : Usage;
    }
    try {
        if (ref->parsed()) {
            std::cout << config_reference();
            return Pass;
        }
        auto cfg = resolve(o);
        for (std::size_t i = 0; i < cmds.size(); ++i)
            if (subs[i]->parsed()) {
                RunDir run(o.out_dir, cmds[i].first, cfg);
                int rc = cmds[i].second(cfg, run);
                run.log() << "exit " << rc << '\n';
                std::cout << "run directory: " << run.path().string() << '\n';
                return rc;
            }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return Usage;
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return Numerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return Usage;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return Usage;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return Numerical;
    }
    return Usage;
}
