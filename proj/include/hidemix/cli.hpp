#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hidemix/verify.hpp"

namespace hidemix {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Line-oriented key = value configuration plus equivalent command-line flags;
// flags override file entries. The effective configuration (defaults filled)
// serializes back to the same text form.
struct RunConfig {
    std::string command;
    std::map<std::string, std::string> kv;

    bool operator==(const RunConfig&) const = default;

    std::string get(const std::string& key) const {
        auto it = kv.find(key);
        return it == kv.end() ? std::string() : it->second;
    }

    std::string serialize() const {
        std::string out = "command = " + command + "\n";
        for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
        return out;
    }
};

namespace cli_detail {

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "problem", "method",  "spaces",  "levels",      "nx0",        "nx",
        "coupling", "k",      "k_list",  "T",           "init_u",     "init_q",
        "out",      "workers", "seed",   "snapshots",   "timings",    "substeps",
        "g",        "n",      "resolvent_c", "grid_points", "inject_nonfinite_step"};
    return keys;
}

inline const std::set<std::string>& known_commands() {
    static const std::set<std::string> cmds = {"solve", "convergence", "temporal", "project",
                                               "quadcheck"};
    return cmds;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "command") {
        if (!known_commands().count(value))
            throw ConfigError("unknown command '" + value + "'");
        cfg.command = value;
        return;
    }
    if (!known_keys().count(key)) throw ConfigError("unknown key '" + key + "'");
    cfg.kv[key] = value;
}

inline double parse_number(const std::string& key, const std::string& value) {
    const auto slash = value.find('/');
    try {
        size_t pos = 0;
        if (slash == std::string::npos) {
            const double v = std::stod(value, &pos);
            if (pos != value.size()) throw std::invalid_argument(value);
            return v;
        }
        const double num = std::stod(value.substr(0, slash), &pos);
        const double den = std::stod(value.substr(slash + 1));
        if (den == 0.0) throw std::invalid_argument(value);
        return num / den;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': cannot parse number '" + value + "'");
    }
}

inline int parse_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': cannot parse integer '" + value + "'");
    }
}

inline std::vector<double> parse_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_number(key, item));
    }
    return out;
}

inline void apply_defaults(RunConfig& cfg) {
    auto def = [&](const char* key, const char* value) {
        if (!cfg.kv.count(key)) cfg.kv[key] = value;
    };
    def("problem", "wave_standing");
    def("method", "extended");
    def("spaces", "rt1dg1");
    def("T", "1");
    def("out", "-");
    def("workers", "");
    def("seed", "0");
    def("timings", "0");
    def("substeps", "2");
    def("inject_nonfinite_step", "0");
    if (cfg.command == "convergence") {
        def("levels", "4");
        def("nx0", "4");
        def("coupling", "0.5");
        def("init_u", "l2");
        def("init_q", "l2");
    } else if (cfg.command == "temporal") {
        def("nx", "64");
        def("k_list", "1/4,1/8,1/16");
    } else if (cfg.command == "solve") {
        def("nx", "8");
        def("k", "1/16");
        def("init_u", "l2");
        def("init_q", "l2");
        def("snapshots", "");
    } else if (cfg.command == "project") {
        def("nx", "8");
        def("k", "1/8");
    } else if (cfg.command == "quadcheck") {
        def("g", "square");
        def("n", "10");
        def("k", "0.1");
        def("resolvent_c", "");
        def("grid_points", "32");
    }
}

}  // namespace cli_detail

// Parse the file form (key = value lines, # comments).
inline RunConfig parse_config_text(const std::string& text, bool fill_defaults = true) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = cli_detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        cli_detail::set_key(cfg, cli_detail::trim(line.substr(0, eq)),
                            cli_detail::trim(line.substr(eq + 1)));
    }
    if (cfg.command.empty()) throw ConfigError("config does not name a command");
    if (fill_defaults) cli_detail::apply_defaults(cfg);
    return cfg;
}

// Parse command-line arguments: `hidemix <command> [--key value | --key=value |
// --config file]...`; flags override file entries.
inline RunConfig parse_config(const std::vector<std::string>& args) {
    RunConfig cfg;
    RunConfig flag_overrides;
    std::string config_path;
    size_t i = 0;
    if (i < args.size() && !args[i].starts_with("--")) {
        cli_detail::set_key(cfg, "command", args[i]);
        ++i;
    }
    for (; i < args.size(); ++i) {
        std::string arg = args[i];
        if (!arg.starts_with("--")) throw ConfigError("unexpected argument '" + arg + "'");
        arg.erase(0, 2);
        std::string key, value;
        const auto eq = arg.find('=');
        if (eq != std::string::npos) {
            key = arg.substr(0, eq);
            value = arg.substr(eq + 1);
        } else {
            key = arg;
            if (i + 1 >= args.size()) throw ConfigError("flag '--" + key + "' is missing a value");
            value = args[++i];
        }
        if (key == "config") {
            config_path = value;
        } else {
            cli_detail::set_key(flag_overrides, key, value);
        }
    }
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
        std::stringstream buf;
        buf << in.rdbuf();
        RunConfig from_file = parse_config_text(buf.str(), false);
        if (cfg.command.empty()) cfg.command = from_file.command;
        cfg.kv = from_file.kv;
    }
    for (const auto& [key, value] : flag_overrides.kv) cfg.kv[key] = value;
    if (cfg.command.empty()) throw ConfigError("no command given");
    cli_detail::apply_defaults(cfg);
    return cfg;
}

namespace cli_detail {

inline Method parse_method(const RunConfig& cfg) {
    const std::string m = cfg.get("method");
    if (m == "extended") return Method::extended;
    if (m == "standard") return Method::standard;
    throw ConfigError("key 'method': expected 'extended' or 'standard', got '" + m + "'");
}

inline SpacePair parse_spaces(const RunConfig& cfg) {
    const std::string s = cfg.get("spaces");
    if (s == "rt0dg0") return SpacePair::rt0_dg0;
    if (s == "rt1dg1") return SpacePair::rt1_dg1;
    throw ConfigError("key 'spaces': expected 'rt0dg0' or 'rt1dg1', got '" + s + "'");
}

inline InitU parse_init_u(const RunConfig& cfg) {
    const std::string s = cfg.get("init_u");
    if (s == "l2" || s.empty()) return InitU::l2;
    if (s == "ritz") return InitU::ritz;
    throw ConfigError("key 'init_u': expected 'l2' or 'ritz', got '" + s + "'");
}

inline InitQ parse_init_q(const RunConfig& cfg) {
    const std::string s = cfg.get("init_q");
    if (s == "l2" || s.empty()) return InitQ::l2;
    if (s == "fortin") return InitQ::fortin;
    throw ConfigError("key 'init_q': expected 'l2' or 'fortin', got '" + s + "'");
}

inline int effective_workers(const RunConfig& cfg) {
    const std::string w = cfg.get("workers");
    if (!w.empty()) return std::max(1, parse_int("workers", w));
    if (const char* env = std::getenv("HIDEMIX_WORKERS"))
        return std::max(1, parse_int("HIDEMIX_WORKERS", env));
    return 1;
}

inline void require_divides(double k, double T) {
    const double n = T / k;
    if (k <= 0.0 || T <= 0.0 || std::abs(n - std::lround(n)) > 1e-9 || std::lround(n) < 1) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "time step k = %.12g does not divide T = %.12g", k, T);
        throw ConfigError(buf);
    }
}

struct OutputTarget {
    std::ofstream file;
    std::ostream* os = nullptr;
};

inline OutputTarget open_output(const RunConfig& cfg) {
    OutputTarget out;
    const std::string path = cfg.get("out");
    if (path.empty() || path == "-") {
        out.os = &std::cout;
        return out;
    }
    out.file.open(path);
    if (!out.file) throw ConfigError("cannot open output path '" + path + "'");
    out.os = &out.file;
    return out;
}

inline int dispatch_solve(const RunConfig& cfg) {
    Problem prob = manufactured_problem(cfg.get("problem"));
    const int nx = parse_int("nx", cfg.get("nx"));
    if (nx < 1) throw ConfigError("key 'nx': must be positive");
    const double k = parse_number("k", cfg.get("k"));
    const double T = parse_number("T", cfg.get("T"));
    require_divides(k, T);

    SchemeConfig sc = scheme_config_for(prob, parse_method(cfg), parse_spaces(cfg), k, T);
    sc.init_q = parse_init_q(cfg);
    sc.resolvent_substeps = parse_int("substeps", cfg.get("substeps"));
    sc.inject_nonfinite_step = parse_int("inject_nonfinite_step", cfg.get("inject_nonfinite_step"));
    Mesh mesh = build_structured_mesh(nx, nx);
    if (parse_init_u(cfg) == InitU::ritz) {
        DofSpace wh(mesh, scalar_partner(vector_kind(sc.spaces)));
        DofSpace vh(mesh, vector_kind(sc.spaces));
        sc.init_u = InitU::ritz;
        sc.ritz_u0 = ritz_initial_u(prob, sc.method, wh, vh);
    }
    const std::string snap = cfg.get("snapshots");
    sc.snapshot_times = snap.empty() ? std::vector<double>{0.0, T / 2.0, T}
                                     : parse_list("snapshots", snap);

    auto snaps = run_scheme(mesh, sc);
    auto out = open_output(cfg);
    *out.os << "t,dof_kind,index,value\n";
    char buf[96];
    for (const auto& s : snaps) {
        auto emit = [&](const char* kind, const std::vector<double>& v) {
            for (size_t i = 0; i < v.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.12e,%s,%zu,%.12e\n", s.t, kind, i, v[i]);
                *out.os << buf;
            }
        };
        emit("U", s.u);
        emit("Q", s.q);
        emit("Z", s.z);
    }
    std::cerr << "solve: " << snaps.size() << " snapshots written\n";
    return 0;
}

inline int dispatch_convergence(const RunConfig& cfg) {
    Problem prob = manufactured_problem(cfg.get("problem"));
    StudyOptions opt;
    opt.method = parse_method(cfg);
    opt.spaces = parse_spaces(cfg);
    opt.levels = parse_int("levels", cfg.get("levels"));
    opt.nx0 = parse_int("nx0", cfg.get("nx0"));
    opt.coupling = parse_number("coupling", cfg.get("coupling"));
    opt.T = parse_number("T", cfg.get("T"));
    opt.init_u = parse_init_u(cfg);
    opt.init_q = parse_init_q(cfg);
    opt.workers = effective_workers(cfg);
    opt.resolvent_substeps = parse_int("substeps", cfg.get("substeps"));
    if (opt.nx0 < 1 || opt.coupling <= 0.0 || opt.T <= 0.0)
        throw ConfigError("convergence: nx0, coupling and T must be positive");
    require_divides(opt.coupling / opt.nx0, opt.T);

    auto rep = convergence_study(prob, opt);
    auto out = open_output(cfg);
    *out.os << rep.to_csv(cfg.get("timings") == "1");
    std::cerr << "convergence: " << opt.levels << " levels completed\n";
    return 0;
}

inline int dispatch_temporal(const RunConfig& cfg) {
    Problem prob = manufactured_problem(cfg.get("problem"));
    TemporalOptions opt;
    opt.method = parse_method(cfg);
    opt.spaces = parse_spaces(cfg);
    opt.nx = parse_int("nx", cfg.get("nx"));
    opt.k_values = parse_list("k_list", cfg.get("k_list"));
    opt.T = parse_number("T", cfg.get("T"));
    opt.workers = effective_workers(cfg);
    opt.resolvent_substeps = parse_int("substeps", cfg.get("substeps"));
    for (double k : opt.k_values) require_divides(k, opt.T);

    auto rep = temporal_order_study(prob, opt);
    auto out = open_output(cfg);
    *out.os << rep.to_csv(cfg.get("timings") == "1");
    if (rep.inconclusive) {
        std::cerr << "temporal: inconclusive (spatial error floor dominates)\n";
        throw InconclusiveError("temporal study inconclusive");
    }
    std::cerr << "temporal: " << opt.k_values.size() << " step sizes completed\n";
    return 0;
}

inline int dispatch_project(const RunConfig& cfg) {
    Problem prob = manufactured_problem(cfg.get("problem"));
    const int nx = parse_int("nx", cfg.get("nx"));
    const double k = parse_number("k", cfg.get("k"));
    const double T = parse_number("T", cfg.get("T"));
    require_divides(k, T);
    const int n = static_cast<int>(std::lround(T / k));
    const Method method = parse_method(cfg);
    const SpacePair pair = parse_spaces(cfg);

    Mesh mesh = build_structured_mesh(nx, nx);
    DofSpace wh(mesh, scalar_partner(vector_kind(pair)));
    DofSpace vh(mesh, vector_kind(pair));

    auto out = open_output(cfg);
    *out.os << "t,err_u,err_q,err_sigma\n";
    char buf[160];
    if (method == Method::extended) {
        auto proj = ritz_volterra_project_extended(prob, wh, vh, n, k);
        for (int lvl = 0; lvl <= n; ++lvl) {
            const double t = lvl * k;
            const double eu = l2_error_scalar([&](Vec2 x) { return prob.u(x, t); },
                                              proj.u[static_cast<size_t>(lvl)], wh);
            const double eq = l2_error_vector([&](Vec2 x) { return prob.q(x, t); },
                                              proj.q[static_cast<size_t>(lvl)], vh);
            const double es = l2_error_vector([&](Vec2 x) { return prob.sigma(x, t); },
                                              proj.sigma[static_cast<size_t>(lvl)], vh);
            std::snprintf(buf, sizeof buf, "%.12e,%.12e,%.12e,%.12e\n", t, eu, eq, es);
            *out.os << buf;
        }
    } else {
        auto proj = ritz_volterra_project_standard(prob, wh, vh, n, k,
                                                   parse_int("substeps", cfg.get("substeps")));
        for (int lvl = 0; lvl <= n; ++lvl) {
            const double t = lvl * k;
            const double eu = l2_error_scalar([&](Vec2 x) { return prob.u(x, t); },
                                              proj.u[static_cast<size_t>(lvl)], wh);
            const double es = l2_error_vector([&](Vec2 x) { return prob.sigma(x, t); },
                                              proj.sigma[static_cast<size_t>(lvl)], vh);
            std::snprintf(buf, sizeof buf, "%.12e,%.12e,na,%.12e\n", t, eu, es);
            *out.os << buf;
        }
    }
    std::cerr << "project: " << (n + 1) << " levels written\n";
    return 0;
}

inline int dispatch_quadcheck(const RunConfig& cfg) {
    const std::string g = cfg.get("g");
    const int n = parse_int("n", cfg.get("n"));
    const double k = parse_number("k", cfg.get("k"));
    if (n < 1 || k <= 0.0) throw ConfigError("quadcheck: n and k must be positive");

    std::function<double(double)> fn, fn_dd;
    if (g == "const") {
        fn = [](double) { return 1.0; };
        fn_dd = [](double) { return 0.0; };
    } else if (g == "linear") {
        fn = [](double s) { return s; };
        fn_dd = [](double) { return 0.0; };
    } else if (g == "square") {
        fn = [](double s) { return s * s; };
        fn_dd = [](double) { return 2.0; };
    } else if (g == "sin") {
        fn = [](double s) { return std::sin(s); };
        fn_dd = [](double s) { return -std::sin(s); };
    } else if (g == "exp") {
        fn = [](double s) { return std::exp(s); };
        fn_dd = [](double s) { return std::exp(s); };
    } else {
        throw ConfigError("key 'g': expected one of const|linear|square|sin|exp, got '" + g + "'");
    }

    auto out = open_output(cfg);
    *out.os << "check,param,n,k,value\n";
    char buf[160];
    const double qe = quadrature_error(fn, n, k);
    const double pe = peano_error(fn_dd, n, k);
    std::snprintf(buf, sizeof buf, "quadrature_error,%s,%d,%.12e,%.12e\n", g.c_str(), n, k, qe);
    *out.os << buf;
    std::snprintf(buf, sizeof buf, "peano_error,%s,%d,%.12e,%.12e\n", g.c_str(), n, k, pe);
    *out.os << buf;

    const std::string cstr = cfg.get("resolvent_c");
    if (!cstr.empty()) {
        // tabulated resolvent of B = cA against c e^{c(t-s)} on a [0,1] lattice
        const double c = parse_number("resolvent_c", cstr);
        const int pts = parse_int("grid_points", cfg.get("grid_points"));
        const int substeps = parse_int("substeps", cfg.get("substeps"));
        if (pts < 1) throw ConfigError("quadcheck: grid_points must be positive");
        KernelSet ks;
        ks.kind = KernelKind::convolution;
        ks.B = [c](Vec2, double, double) { return Mat2::scaled_identity(c); };
        ks.spatially_constant = true;
        auto tab = resolvent_table(ks, {0.0, 0.0}, pts, 1.0 / pts, substeps);
        double worst = 0.0;
        for (int m = 1; m <= pts; ++m)
            for (int j = 0; j < m; ++j) {
                const double dt = (m - j - 0.5) / pts;
                worst = std::max(worst,
                                 (tab.at(m, j) - Mat2::scaled_identity(c * std::exp(c * dt))).max_abs());
            }
        std::snprintf(buf, sizeof buf, "resolvent_max_abs_err,%.6g,%d,%.12e,%.12e\n", c, pts,
                      1.0 / pts, worst);
        *out.os << buf;
    }
    std::cerr << "quadcheck: done\n";
    return 0;
}

}  // namespace cli_detail

// Returns the process exit code: 0 success, 1 numerical divergence, 2 bad
// configuration, 3 inconclusive study.
inline int dispatch(const RunConfig& cfg) {
    if (cfg.command == "solve") return cli_detail::dispatch_solve(cfg);
    if (cfg.command == "convergence") return cli_detail::dispatch_convergence(cfg);
    if (cfg.command == "temporal") return cli_detail::dispatch_temporal(cfg);
    if (cfg.command == "project") return cli_detail::dispatch_project(cfg);
    if (cfg.command == "quadcheck") return cli_detail::dispatch_quadcheck(cfg);
    throw ConfigError("unknown command '" + cfg.command + "'");
}

inline int cli_main(const std::vector<std::string>& args) {
    try {
        RunConfig cfg = parse_config(args);
        return dispatch(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InconclusiveError&) {
        return 3;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const SingularMatrixError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const StateError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace hidemix
