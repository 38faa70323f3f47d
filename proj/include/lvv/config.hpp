#pragma once

#include <cstdint>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "charfn.hpp"
#include "itoverify.hpp"
#include "validator.hpp"

namespace lvv {

using Json = nlohmann::json;

// ------------------------------------------------------------ jump laws from strings

namespace detail {

inline std::pair<std::string, std::map<std::string, std::string>> split_spec(const std::string& spec) {
    auto colon = spec.find(':');
    std::map<std::string, std::string> kv;
    std::string head = spec.substr(0, colon);
    if (colon == std::string::npos) return {head, kv};
    std::stringstream ss(spec.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("'" + item + "' in '" + spec + "' is not key=value");
        kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return {head, kv};
}

inline double num(const std::map<std::string, std::string>& kv, const std::string& key, double def,
                  const std::string& spec) {
    auto it = kv.find(key);
    if (it == kv.end()) return def;
    try {
        std::size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("parameter '" + key + "' in '" + spec + "' is not numeric");
    }
}

}  // namespace detail

// "none" | "cp:rate=2,law=uniform,lo=-1,hi=1" | "cp:rate=2,law=atom,x=2" (x and p take
// ';'-separated lists) | "cp:rate=1,law=pareto,xmin=1,tail=3" | "ts:alpha=0.5,lambda=1,c=1"
inline JumpSpec parse_jumps(const std::string& spec) {
    auto [head, kv] = detail::split_spec(spec);
    auto n = [&](const std::string& k, double d) { return detail::num(kv, k, d, spec); };
    JumpSpec js;
    if (head == "none") {
        js = NoJumps{};
    } else if (head == "cp") {
        std::string law = kv.count("law") ? kv.at("law") : "uniform";
        CompoundPoisson cp{n("rate", 1.0), UniformLaw{-1.0, 1.0}};
        if (law == "uniform") {
            cp.law = UniformLaw{n("lo", -1.0), n("hi", 1.0)};
        } else if (law == "atom") {
            auto list = [&](const std::string& key, const std::string& def) {
                std::vector<double> out;
                std::stringstream ss(kv.count(key) ? kv.at(key) : def);
                std::string item;
                while (std::getline(ss, item, ';')) out.push_back(detail::num({{key, item}}, key, 0.0, spec));
                return out;
            };
            auto xs = list("x", "1");
            auto ps = kv.count("p") ? list("p", "") : std::vector<double>(xs.size(), 1.0 / xs.size());
            if (ps.size() != xs.size()) throw ConfigError("atom law needs as many p as x in '" + spec + "'");
            AtomLaw a;
            for (std::size_t i = 0; i < xs.size(); ++i) a.atoms.push_back({xs[i], ps[i]});
            cp.law = a;
        } else if (law == "pareto") {
            cp.law = ParetoLaw{n("xmin", 1.0), n("tail", 3.0)};
        } else {
            throw ConfigError("unknown jump law '" + law + "'");
        }
        js = cp;
    } else if (head == "ts") {
        js = TemperedStable{n("alpha", 0.5), n("lambda", 1.0), n("c", 1.0)};
    } else {
        throw ConfigError("unknown jump description '" + spec + "'");
    }
    try {
        validate(js);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return js;
}

inline TestFunctional parse_functional(const std::string& name) {
    if (name == "none" || name == "0") return zero_functional();
    return battery_member(name);
}

// ------------------------------------------------------------ defaults

struct ConfigKey {
    std::string path;  // dotted
    Json value;
    std::string doc;
};

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"seed", 1, "master seed; path i uses substream i"},
        {"workers", 1, "worker threads for per-path work"},
        {"deterministic", true, "exact-order reductions (results do not depend on workers)"},
        {"kernel", "frac:d=0.25", "kernel: frac:d=<d>, indicator, shifted-indicator, zero, slow-decay:rate=<r>"},
        {"model.sigma", 0.5, "Gaussian coefficient of L"},
        {"model.nu", "cp:rate=2,law=uniform,lo=-1,hi=1",
         "jump part: none, cp:rate=,law=uniform|atom|pareto,..., ts:alpha=,lambda=,c="},
        {"model.eps", 0.0, "small-jump cutoff for tempered stable laws (0 picks the default)"},
        {"model.gauss_compensation", true, "replace jumps below eps by a Brownian part of equal variance"},
        {"grid.T", 1.0, "horizon"},
        {"grid.A", 100.0, "window length: the driver starts at -A"},
        {"grid.n_cells", 128, "cells on [0,T]"},
        {"grid.ratio", 1.05, "growth ratio of the cells on [-A,0]"},
        {"quad.abs_tol", 1e-12, "absolute tolerance of adaptive quadrature"},
        {"quad.rel_tol", 1e-10, "relative tolerance of adaptive quadrature"},
        {"simulate.n_paths", 4, "paths written by simulate"},
        {"simulate.moment_order", 2.0, "order p of the reported E sup|M|^p"},
        {"validate.A", 1000.0, "probe window for the kernel validator"},
        {"validate.n_s", 61, "log-spaced s probes"},
        {"validate.n_t", 64, "t probes"},
        {"validate.n_random", 10000, "random (t,s) probes"},
        {"charfn.t", Json::array({1.0}), "times at which the characteristic function is tabulated"},
        {"charfn.u_min", -5.0, "first u"},
        {"charfn.u_max", 5.0, "last u"},
        {"charfn.u_count", 21, "number of u values"},
        {"charfn.g", "none", "test functional defining Q_g (none for P)"},
        {"stransform.n_paths", 4000, "paths for the weighted Monte Carlo estimates"},
        {"stransform.g", Json::array({"g1", "g2", "g3", "g4", "g5", "g6", "g7", "g8"}), "test functionals"},
        {"stransform.G", "gauss:a=1,m=0,w=0.7", "G for S(G(M(T)))"},
        {"verify.modes", Json::array({"expectation", "stransform"}), "subset of pathwise, expectation, stransform"},
        {"verify.G", Json::array({"gauss:a=1,m=0,w=0.7"}), "test functions G"},
        {"verify.g", Json::array({"g1", "g4"}), "test functionals for the S-transform mode"},
        {"verify.n_paths", 2000, "Monte Carlo paths per cell"},
        {"verify.check_paths", 400, "paths used for lattice doubling and grid coarsening"},
        {"verify.lattice.s_order", 8, "s nodes per window piece"},
        {"verify.lattice.t_order", 48, "t nodes per s row"},
        {"verify.lattice.x_order", 8, "x nodes per side of 0"},
        {"verify.connection", false, "also run the connection check with X = cos(M(t-))"},
        {"verify.pathwise.n_fine", 1024, "finest pathwise grid (cells on [0,T])"},
        {"verify.pathwise.factors", Json::array({8, 4, 2, 1}), "coarsening factors, coarsest first"},
        {"verify.pathwise.n_paths", 200, "paths for the pathwise refinement study"},
        {"verify.fault_term", "", "inject a fault into this term (testing the report)"},
        {"verify.fault_scale", 1.0, "factor applied to the faulted term"},
    };
    return keys;
}

inline Json::json_pointer pointer(const std::string& dotted) {
    std::string p;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) p += "/" + part;
    return Json::json_pointer(p);
}

inline Json default_config() {
    Json j = Json::object();
    for (auto& k : config_keys()) j[pointer(k.path)] = k.value;
    return j;
}

// markdown table of every key with its default
inline std::string config_reference() {
    std::ostringstream os;
    os << "# Configuration reference\n\n"
       << "Generated by `lvv config-reference`. Keys are dotted paths into the TOML file;\n"
       << "`--set key=value` overrides any of them.\n\n"
       << "| key | default | meaning |\n|---|---|---|\n";
    auto cell = [](std::string s) {
        for (std::size_t p = s.find('|'); p != std::string::npos; p = s.find('|', p + 2)) s.replace(p, 1, "\\|");
        return s;
    };
    for (auto& k : config_keys())
        os << "| `" << k.path << "` | `" << cell(k.value.dump()) << "` | " << cell(k.doc) << " |\n";
    return os.str();
}

// ------------------------------------------------------------ TOML <-> JSON

namespace detail {

inline Json toml_to_json(const toml::node& n) {
    if (auto t = n.as_table()) {
        Json j = Json::object();
        for (auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
        return j;
    }
    if (auto a = n.as_array()) {
        Json j = Json::array();
        for (auto& v : *a) j.push_back(toml_to_json(v));
        return j;
    }
    if (auto v = n.as_string()) return v->get();
    if (auto v = n.as_integer()) return v->get();
    if (auto v = n.as_floating_point()) return v->get();
    if (auto v = n.as_boolean()) return v->get();
    throw ConfigError("unsupported TOML value (dates and times are not used)");
}

inline void json_to_toml(const Json& j, toml::table& t);

inline toml::array json_to_toml_array(const Json& j) {
    toml::array a;
    for (auto& v : j) {
        if (v.is_string()) a.push_back(v.get<std::string>());
        else if (v.is_boolean()) a.push_back(v.get<bool>());
        else if (v.is_number_integer()) a.push_back(v.get<std::int64_t>());
        else if (v.is_number()) a.push_back(v.get<double>());
        else if (v.is_array()) a.push_back(json_to_toml_array(v));
        else throw ConfigError("unsupported array element in configuration");
    }
    return a;
}

inline void json_to_toml(const Json& j, toml::table& t) {
    for (auto& [k, v] : j.items()) {
        if (v.is_object()) {
            toml::table sub;
            json_to_toml(v, sub);
            t.insert(k, std::move(sub));
        } else if (v.is_array()) {
            t.insert(k, json_to_toml_array(v));
        } else if (v.is_string()) {
            t.insert(k, v.get<std::string>());
        } else if (v.is_boolean()) {
            t.insert(k, v.get<bool>());
        } else if (v.is_number_integer()) {
            t.insert(k, v.get<std::int64_t>());
        } else if (v.is_number()) {
            t.insert(k, v.get<double>());
        } else {
            throw ConfigError("unsupported value for '" + k + "'");
        }
    }
}

// user value checked against the default's type
inline Json coerce(const std::string& key, const Json& def, const Json& v) {
    if (def.is_number_float() && v.is_number()) return v.get<double>();
    if (def.is_number_integer() && v.is_number_integer()) return v;
    if (def.is_number_integer() && v.is_number_float() && v.get<double>() == std::floor(v.get<double>()))
        return static_cast<std::int64_t>(v.get<double>());
    if (def.is_boolean() && v.is_boolean()) return v;
    if (def.is_string() && v.is_string()) return v;
    if (def.is_array() && v.is_array()) return v;
    throw ConfigError("config key '" + key + "' has the wrong type (expected " + std::string(def.type_name()) + ")");
}

inline void merge(Json& base, const Json& user, const std::string& prefix) {
    for (auto& [k, v] : user.items()) {
        std::string key = prefix.empty() ? k : prefix + "." + k;
        if (!base.contains(k)) throw ConfigError("unknown config key '" + key + "'");
        if (base[k].is_object()) {
            if (!v.is_object()) throw ConfigError("config key '" + key + "' must be a table");
            merge(base[k], v, key);
        } else {
            base[k] = coerce(key, base[k], v);
        }
    }
}

}  // namespace detail

inline Json parse_toml(const std::string& text) {
    try {
        return detail::toml_to_json(toml::parse(text));
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "config parse error: " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(os.str());
    }
}

inline std::string to_toml(const Json& j) {
    toml::table t;
    detail::json_to_toml(j, t);
    std::ostringstream os;
    os << t << '\n';
    return os.str();
}

// defaults <- file <- overrides ("a.b=value", value in TOML syntax or a bare string)
inline Json load_config(const std::string& text, const std::vector<std::string>& overrides = {}) {
    Json cfg = default_config();
    detail::merge(cfg, parse_toml(text), "");
    for (auto& o : overrides) {
        auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
        std::string key = o.substr(0, eq), raw = o.substr(eq + 1);
        Json v;
        try {
            v = detail::toml_to_json(*toml::parse("v = " + raw).get("v"));
        } catch (const toml::parse_error&) {
            v = raw;
        }
        auto ptr = pointer(key);
        if (!cfg.contains(ptr) || cfg[ptr].is_object()) throw ConfigError("unknown config key '" + key + "'");
        cfg[ptr] = detail::coerce(key, cfg[ptr], v);
    }
    return cfg;
}

inline Json load_config_file(const std::string& path, const std::vector<std::string>& overrides = {}) {
    if (path.empty()) return load_config("", overrides);
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config(ss.str(), overrides);
}

// FNV-1a over the canonical dump, without keys that cannot change results
inline std::string config_hash(Json cfg) {
    cfg.erase("workers");
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : cfg.dump()) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ------------------------------------------------------------ objects from a config

inline KernelHandle config_kernel(const Json& c) {
    try {
        return parse_kernel(c.at("kernel").get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

inline LevyModel config_model(const Json& c) {
    const auto& m = c.at("model");
    try {
        auto model = make_model(m.at("sigma").get<double>(), parse_jumps(m.at("nu").get<std::string>()),
                                m.at("eps").get<double>(), m.at("gauss_compensation").get<bool>());
        return model;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

inline QuadratureSpec config_quad(const Json& c) {
    QuadratureSpec q;
    q.abs_tol = c.at("quad").at("abs_tol").get<double>();
    q.rel_tol = c.at("quad").at("rel_tol").get<double>();
    q.tail_cutoff = c.at("grid").at("A").get<double>();
    try {
        validate(q);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return q;
}

inline TimeGrid config_grid(const Json& c) {
    const auto& g = c.at("grid");
    try {
        return make_grid(g.at("A").get<double>(), g.at("T").get<double>(), g.at("n_cells").get<int>(),
                         g.at("ratio").get<double>());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

inline ProbeConfig config_probe(const Json& c) {
    ProbeConfig p;
    const auto& v = c.at("validate");
    p.T = c.at("grid").at("T").get<double>();
    p.A = v.at("A").get<double>();
    p.n_s = v.at("n_s").get<int>();
    p.n_t = v.at("n_t").get<int>();
    p.n_random = v.at("n_random").get<int>();
    p.seed = c.at("seed").get<std::uint64_t>();
    try {
        validate(p);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return p;
}

inline std::vector<TestFunctional> config_functionals(const Json& list) {
    std::vector<TestFunctional> out;
    for (auto& n : list) out.push_back(parse_functional(n.get<std::string>()));
    return out;
}

inline std::vector<SmoothTestFunction> config_test_functions(const Json& list) {
    std::vector<SmoothTestFunction> out;
    for (auto& n : list) out.push_back(parse_test_function(n.get<std::string>()));
    if (out.empty()) throw ConfigError("at least one test function G is required");
    return out;
}

inline ScenarioSpec config_scenario(const Json& c) {
    ScenarioSpec sc;
    sc.kernel = config_kernel(c);
    sc.model = config_model(c);
    sc.name = c.at("kernel").get<std::string>() + "|" + c.at("model").at("nu").get<std::string>();
    const auto& g = c.at("grid");
    const auto& v = c.at("verify");
    sc.T = g.at("T").get<double>();
    sc.A = g.at("A").get<double>();
    sc.n_cells = g.at("n_cells").get<int>();
    sc.n_paths = v.at("n_paths").get<std::size_t>();
    sc.check_paths = v.at("check_paths").get<std::size_t>();
    sc.seed = c.at("seed").get<std::uint64_t>();
    sc.workers = c.at("workers").get<int>();
    sc.lattice = {v.at("lattice").at("s_order").get<int>(), v.at("lattice").at("t_order").get<int>(),
                  v.at("lattice").at("x_order").get<int>()};
    sc.quad = config_quad(c);
    sc.fault_term = v.at("fault_term").get<std::string>();
    sc.fault_scale = v.at("fault_scale").get<double>();
    if (sc.n_paths < 2) throw ConfigError("verify.n_paths must be at least 2");
    if (sc.workers < 1) throw ConfigError("workers must be positive");
    if (sc.n_cells % 2 != 0) throw ConfigError("grid.n_cells must be even (the discretisation check halves it)");
    return sc;
}

inline std::vector<std::string> config_modes(const Json& c, const KernelHandle& k) {
    std::vector<std::string> modes;
    for (auto& m : c.at("verify").at("modes")) {
        auto s = m.get<std::string>();
        if (s != "pathwise" && s != "expectation" && s != "stransform") throw ConfigError("invalid mode '" + s + "'");
        if (s == "pathwise" && k.label != "indicator") throw ConfigError("pathwise mode requires the indicator kernel");
        modes.push_back(s);
    }
    return modes;
}

}  // namespace lvv
