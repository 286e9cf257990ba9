#pragma once
// Config files, environment overrides and run outputs (CSV, summary, snapshot).
// Needs the single-header nlohmann json on the include path.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "neckpinch/evolution.hpp"

extern char** environ;

namespace neckpinch {

using json = nlohmann::json;

struct RunSpec {
    std::string name = "run";
    RunConfig cfg;
    std::string out = "out";
};

namespace io {

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> k = {
        "name",    "out",          "d",           "Ny",         "Ntheta",          "tau0",     "tau_end",
        "dt",      "eps",          "delta",       "B0",         "a0",              "perturbations",
        "noise",   "seed",         "even_y",      "theta_free", "no_sine",         "cadence",  "recenter",
        "recenter_interval",       "adapt_dt",    "doubling_tol", "taper_inner",   "taper_outer"};
    return k;
}

inline bool known_key(const std::string& k) {
    const auto& ks = config_keys();
    return std::find(ks.begin(), ks.end(), k) != ks.end();
}

template <class T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

// parse one overriding value: JSON literal if it parses, plain string otherwise
inline json parse_scalar(const std::string& s) {
    json j = json::parse(s, nullptr, false);
    if (j.is_discarded()) return json(s);
    return j;
}

inline std::string env_name(const std::string& key) {
    std::string s = "NECK_";
    for (char ch : key) s += char(std::toupper((unsigned char)ch));
    return s;
}

}  // namespace io

// NECK_<KEY> overrides (key upper-cased); unknown NECK_ names are rejected
inline void apply_env_overrides(json& j, char** env = environ) {
    std::map<std::string, std::string> by_env;
    for (const auto& k : io::config_keys()) by_env[io::env_name(k)] = k;
    for (char** e = env; e && *e; ++e) {
        std::string kv = *e;
        if (kv.rfind("NECK_", 0) != 0) continue;
        auto eq = kv.find('=');
        std::string name = kv.substr(0, eq), val = eq == std::string::npos ? "" : kv.substr(eq + 1);
        auto it = by_env.find(name);
        if (it == by_env.end()) throw ConfigError("unknown environment override " + name);
        j[it->second] = io::parse_scalar(val);
    }
}

inline RunSpec spec_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a key/value object");
    RunSpec s;
    RunConfig& c = s.cfg;
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!io::known_key(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
    auto num = [&](const char* k, double& x) {
        if (j.contains(k)) x = io::get_as<double>(j.at(k), k);
    };
    auto flag = [&](const char* k, bool& x) {
        if (j.contains(k)) x = io::get_as<bool>(j.at(k), k);
    };
    auto integer = [&](const char* k, int& x) {
        if (!j.contains(k)) return;
        if (!j.at(k).is_number_integer()) throw ConfigError(std::string("config key '") + k + "' must be an integer");
        x = j.at(k).get<int>();
    };
    if (j.contains("name")) s.name = io::get_as<std::string>(j.at("name"), "name");
    if (j.contains("out")) s.out = io::get_as<std::string>(j.at("out"), "out");
    integer("d", c.d);
    integer("Ny", c.ny);
    integer("Ntheta", c.ntheta);
    num("tau0", c.tau0);
    num("tau_end", c.tau_end);
    num("dt", c.dt);
    num("eps", c.cutoff.eps);
    num("delta", c.delta);
    num("noise", c.noise);
    num("cadence", c.cadence);
    num("recenter_interval", c.recenter_interval);
    num("doubling_tol", c.doubling_tol);
    num("taper_inner", c.taper_inner);
    num("taper_outer", c.taper_outer);
    flag("even_y", c.symmetry.even_y);
    flag("theta_free", c.symmetry.theta_free);
    flag("no_sine", c.symmetry.no_sine);
    flag("recenter", c.recenter);
    flag("adapt_dt", c.adapt_dt);
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) throw ConfigError("config key 'seed' must be a nonnegative integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("a0") && !j.at("a0").is_null()) c.a0 = io::get_as<double>(j.at("a0"), "a0");
    if (c.d < 1 || c.d > 3) throw ConfigError("d must be 1, 2 or 3");
    if (j.contains("B0")) {
        const json& B = j.at("B0");
        if (!B.is_array() || int(B.size()) != c.d) throw ConfigError("B0 must be a d x d array");
        for (int k = 0; k < c.d; ++k) {
            if (!B[k].is_array() || int(B[k].size()) != c.d) throw ConfigError("B0 must be a d x d array");
            for (int l = 0; l < c.d; ++l) c.B0(k, l) = io::get_as<double>(B[k][l], "B0");
        }
        if ((c.B0 - c.B0.transpose()).cwiseAbs().maxCoeff() > 0.0) throw ConfigError("B0 must be symmetric");
    }
    if (j.contains("perturbations")) {
        const json& P = j.at("perturbations");
        if (!P.is_array()) throw ConfigError("perturbations must be an array");
        for (const auto& e : P) {
            if (!e.is_object()) throw ConfigError("each perturbation is an object {n, mode, amp}");
            for (auto it = e.begin(); it != e.end(); ++it)
                if (it.key() != "n" && it.key() != "mode" && it.key() != "amp")
                    throw ConfigError("unknown perturbation key '" + it.key() + "'");
            if (!e.contains("n") || !e.contains("amp")) throw ConfigError("perturbation needs n and amp");
            Perturbation p;
            const json& n = e.at("n");
            if (!n.is_array() || int(n.size()) != c.d) throw ConfigError("perturbation n must have d entries");
            for (int k = 0; k < c.d; ++k) {
                if (!n[k].is_number_integer()) throw ConfigError("perturbation n entries must be integers");
                p.n[k] = n[k].get<int>();
            }
            if (e.contains("mode")) {
                if (!e.at("mode").is_number_integer()) throw ConfigError("perturbation mode must be an integer");
                p.mode = e.at("mode").get<int>();
            }
            p.amp = io::get_as<double>(e.at("amp"), "amp");
            c.perturbations.push_back(p);
        }
    }
    validate(c);
    return s;
}

inline json config_to_json(const RunSpec& s) {
    const RunConfig& c = s.cfg;
    json j;
    j["name"] = s.name;
    j["out"] = s.out;
    j["d"] = c.d;
    j["Ny"] = c.ny;
    j["Ntheta"] = c.ntheta;
    j["tau0"] = c.tau0;
    j["tau_end"] = c.tau_end;
    j["dt"] = c.dt;
    j["eps"] = c.cutoff.eps;
    j["delta"] = c.delta;
    json B = json::array();
    for (int k = 0; k < c.d; ++k) {
        json row = json::array();
        for (int l = 0; l < c.d; ++l) row.push_back(c.B0(k, l));
        B.push_back(row);
    }
    j["B0"] = B;
    j["a0"] = std::isnan(c.a0) ? json(nullptr) : json(c.a0);
    json P = json::array();
    for (const auto& p : c.perturbations) {
        json n = json::array();
        for (int k = 0; k < c.d; ++k) n.push_back(p.n[k]);
        P.push_back({{"n", n}, {"mode", p.mode}, {"amp", p.amp}});
    }
    j["perturbations"] = P;
    j["noise"] = c.noise;
    j["seed"] = c.seed;
    j["even_y"] = c.symmetry.even_y;
    j["theta_free"] = c.symmetry.theta_free;
    j["no_sine"] = c.symmetry.no_sine;
    j["cadence"] = c.cadence;
    j["recenter"] = c.recenter;
    j["recenter_interval"] = c.recenter_interval;
    j["adapt_dt"] = c.adapt_dt;
    j["doubling_tol"] = c.doubling_tol;
    j["taper_inner"] = c.taper_inner;
    j["taper_outer"] = c.taper_outer;
    return j;
}

inline json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read " + path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ConfigError("malformed JSON in " + path);
    return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p);
    if (!f || !(f << text)) throw ConfigError("cannot write " + p.string());
}

// A config file is one run, or a base plus "campaign": [overrides...], each override naming its run.
// Environment overrides apply to every member, after the file.
inline std::vector<RunSpec> load_specs(const json& file, char** env = environ) {
    if (!file.is_object()) throw ConfigError("config must be a key/value object");
    json base = file;
    json members = json::array();
    if (base.contains("campaign")) {
        members = base.at("campaign");
        base.erase("campaign");
        if (!members.is_array() || members.empty()) throw ConfigError("campaign must be a nonempty array");
    }
    std::vector<RunSpec> out;
    if (members.empty()) {
        json j = base;
        apply_env_overrides(j, env);
        out.push_back(spec_from_json(j));
        return out;
    }
    const std::string root = base.value("out", std::string("out"));
    std::vector<std::string> names;
    for (const auto& m : members) {
        if (!m.is_object() || !m.contains("name")) throw ConfigError("each campaign member needs a name");
        if (m.contains("out") || m.contains("campaign")) throw ConfigError("campaign members may not set out or campaign");
        json j = base;
        for (auto it = m.begin(); it != m.end(); ++it) j[it.key()] = it.value();
        apply_env_overrides(j, env);
        RunSpec s = spec_from_json(j);
        if (std::find(names.begin(), names.end(), s.name) != names.end())
            throw ConfigError("duplicate campaign member " + s.name);
        names.push_back(s.name);
        s.out = (std::filesystem::path(root) / s.name).string();
        out.push_back(s);
    }
    return out;
}

namespace io {

inline std::string g17(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace io

inline std::string timeseries_header(int d) {
    std::string h = "tau,a";
    for (int k = 0; k < d; ++k)
        for (int l = k; l < d; ++l) h += ",B_" + std::to_string(k + 1) + std::to_string(l + 1);
    for (int j = 1; j <= 3; ++j)
        for (int k = 1; k <= d; ++k) h += ",beta" + std::to_string(j) + "_" + std::to_string(k);
    h += ",alpha1,alpha2,wL2,wL2_grad,wL2_theta2,Linf3,F,gradF2,Rs,res_B,res_a,case";
    return h;
}

inline std::string timeseries_csv(const TimeSeries& ts) {
    std::ostringstream o;
    const int d = ts.d;
    o << timeseries_header(d) << '\n';
    using io::g17;
    for (const auto& r : ts.rows) {
        o << g17(r.tau) << ',' << g17(r.p.a);
        for (int k = 0; k < d; ++k)
            for (int l = k; l < d; ++l) o << ',' << g17(r.p.B(k, l));
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < d; ++k) o << ',' << g17(r.p.beta[j](k));
        o << ',' << g17(r.p.alpha[0]) << ',' << g17(r.p.alpha[1]) << ',' << g17(r.nt.wL2) << ','
          << g17(r.nt.wL2_grad) << ',' << g17(r.nt.wL2_theta2) << ',' << g17(r.nt.Linf3) << ',' << g17(r.F) << ','
          << g17(r.gradF2) << ',' << g17(r.Rs) << ',' << g17(r.res_B) << ',' << g17(r.res_a) << ','
          << case_name(r.case_so_far) << '\n';
    }
    return o.str();
}

// solver-side columns not in the main series
inline std::string diagnostics_csv(const TimeSeries& ts) {
    std::ostringstream o;
    using io::g17;
    o << "tau,segment,log_dilation,dt,R,sup_w,H1,H2,F_frame,wL2_theta,wL2_ytheta,wL2_hess\n";
    for (const auto& r : ts.rows)
        o << g17(r.tau) << ',' << r.segment << ',' << g17(r.log_dilation) << ',' << g17(r.dt) << ',' << g17(r.R)
          << ',' << g17(r.sup_w) << ',' << g17(r.H1) << ',' << g17(r.H2) << ',' << g17(r.F_frame) << ','
          << g17(r.nt.wL2_theta) << ',' << g17(r.nt.wL2_ytheta) << ',' << g17(r.nt.wL2_hess) << '\n';
    return o.str();
}

inline int exit_code(RunStatus s) {
    switch (s) {
        case RunStatus::ok: return 0;
        case RunStatus::regime_exit: return 3;
        default: return 4;
    }
}

inline json num_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

// checks any finished series can be held to
inline json run_checks(const TimeSeries& ts) {
    json out;
    const auto& rows = ts.rows;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < rows.size(); ++i) worst = std::max(worst, rows[i].F - rows[i - 1].F);
    out["F_nonincreasing"] = {{"pass", rows.size() < 2 || worst < 0.0}, {"max_step_increase", num_or_null(worst)}};

    json wins = json::array();
    double werr = 0.0;
    std::vector<EnergyWindow> ew;
    try {
        ew = energy_windows(rows, 10);
    } catch (const std::invalid_argument&) {
    }
    for (const auto& w : ew) {
        werr = std::max(werr, w.rel_err);
        wins.push_back({{"tau", w.tau}, {"drop", w.drop}, {"integral", w.integral}, {"rel_err", w.rel_err}});
    }
    out["energy_identity"] = {{"pass", !ew.empty() && werr <= 0.02}, {"max_rel_err", werr}, {"windows", wins}};

    double ratio = 0.0;
    int sampled = 0;
    for (const auto& r : rows)
        if (std::isfinite(r.res_B) && r.H1 > 0.0) ratio = std::max(ratio, r.res_B / r.H1), ++sampled;
    out["ode_residual"] = {{"pass", sampled > 0 && ratio <= 10.0}, {"max_res_B_over_H1", ratio}, {"samples", sampled}};

    if (rows.size() >= 5) {
        LyapunovReport L = lyapunov_monitor(rows, 0, rows.size() - 1, 0.1);
        json fits = json::array();
        for (const auto& f : L.fits) fits.push_back({{"name", f.name}, {"c", num_or_null(f.c_fit)}, {"samples", f.samples}});
        out["lyapunov"] = {{"pass", !L.flagged}, {"c_max", L.c_max}, {"fits", fits}};
    }
    return out;
}

inline json summary_json(const RunSpec& s, const TimeSeries& ts, double seconds) {
    json j;
    j["name"] = s.name;
    j["status"] = status_name(ts.status);
    j["exit_code"] = exit_code(ts.status);
    j["message"] = ts.message;
    j["steps"] = ts.steps;
    j["samples"] = ts.rows.size();
    j["tau_last"] = ts.rows.empty() ? json(nullptr) : json(ts.rows.back().tau);
    j["runtime_seconds"] = seconds;
    const Classification& k = ts.classification;
    j["classification"] = {{"case", case_name(k.kind)},
                           {"l", k.l},
                           {"tau_b", k.tau_b},
                           {"gamma", num_or_null(k.gamma)},
                           {"note", k.note}};
    if (!ts.rows.empty()) {
        j["segments"] = ts.rows.back().segment + 1;
        j["log_dilation"] = ts.rows.back().log_dilation;
    }
    j["checks"] = run_checks(ts);
    j["config"] = config_to_json(s);
    return j;
}

inline json snapshot_json(const RunSpec& s, const TimeSeries& ts) {
    const RunConfig& c = s.cfg;
    json j;
    j["frame"] = "rescaled";
    j["d"] = c.d;
    j["Ny"] = c.ny;
    j["Ntheta"] = c.ntheta;
    j["tau"] = ts.rows.empty() ? c.tau0 : ts.rows.back().tau;
    j["tau0"] = c.tau0;
    j["eps"] = c.cutoff.eps;
    j["eta"] = ts.final_eta.c;
    return j;
}

struct Snapshot {
    Basis b;
    Field v;
    double tau = 0.0, tau0 = 0.0;
    CutoffSpec cutoff{};
};

inline Snapshot snapshot_from_json(const json& j) {
    for (const char* k : {"d", "Ny", "Ntheta", "tau", "tau0", "eta"})
        if (!j.contains(k)) throw ConfigError(std::string("snapshot lacks '") + k + "'");
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::vector<std::string> ok = {"frame", "d", "Ny", "Ntheta", "tau", "tau0", "eps", "eta"};
        if (std::find(ok.begin(), ok.end(), it.key()) == ok.end())
            throw ConfigError("unknown snapshot key '" + it.key() + "'");
    }
    if (j.value("frame", std::string("rescaled")) != "rescaled") throw ConfigError("only rescaled snapshots decompose");
    Snapshot s;
    const int d = io::get_as<int>(j.at("d"), "d"), ny = io::get_as<int>(j.at("Ny"), "Ny"),
              nt = io::get_as<int>(j.at("Ntheta"), "Ntheta");
    if (d < 1 || d > 3 || ny < 2 || nt < 1) throw ConfigError("snapshot grid out of range");
    s.b = build_basis(d, ny, nt);
    s.tau = io::get_as<double>(j.at("tau"), "tau");
    s.tau0 = io::get_as<double>(j.at("tau0"), "tau0");
    if (j.contains("eps")) s.cutoff.eps = io::get_as<double>(j.at("eps"), "eps");
    auto eta = io::get_as<std::vector<double>>(j.at("eta"), "eta");
    if (eta.size() != s.b.ncoef()) throw ConfigError("snapshot eta has the wrong length");
    Coeffs c = s.b.zero_coeffs();
    c.c = eta;
    s.v = synthesize(c, s.b);
    for (auto& x : s.v.v) x += std::sqrt(2.0);
    return s;
}

inline json params_json(const Params& p) {
    const int d = p.d;
    json B = json::array(), beta = json::array();
    for (int k = 0; k < d; ++k) {
        json row = json::array();
        for (int l = 0; l < d; ++l) row.push_back(p.B(k, l));
        B.push_back(row);
    }
    for (int j = 0; j < 3; ++j) {
        json v = json::array();
        for (int k = 0; k < d; ++k) v.push_back(p.beta[j](k));
        beta.push_back(v);
    }
    return {{"a", p.a}, {"B", B}, {"beta", beta}, {"alpha", {p.alpha[0], p.alpha[1]}}};
}

}  // namespace neckpinch
