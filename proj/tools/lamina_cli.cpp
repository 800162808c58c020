#include <lamina/expansion.hpp>
#include <lamina/presets.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lamina;

namespace {

struct RunConfig {
    std::string command;
    std::string preset;
    std::optional<double> t, eta_prime;
    int grid = 0;
    std::string out;
    int verbosity = 1;
};

[[noreturn]] void config_fail(const std::string& msg) {
    std::cerr << "lamina: " << msg << "\n";
    std::exit(1);
}

double parse_real(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        config_fail("bad value for " + key + ": '" + v + "'");
    }
    if (used != v.size() || !std::isfinite(x)) config_fail("bad value for " + key + ": '" + v + "'");
    return x;
}

int parse_int(const std::string& key, const std::string& v) {
    const double x = parse_real(key, v);
    if (x != std::floor(x)) config_fail("bad value for " + key + ": '" + v + "'");
    return static_cast<int>(x);
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// key=value lines; '#' starts a comment
void read_config(const std::string& path, RunConfig& cfg, const RunConfig& cli_set) {
    std::ifstream in(path);
    if (!in) config_fail("cannot read config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) config_fail(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
        // command-line flags win over the file
        if (key == "preset") {
            if (cli_set.preset.empty()) cfg.preset = val;
        } else if (key == "t") {
            if (!cli_set.t) cfg.t = parse_real(key, val);
        } else if (key == "eta_prime" || key == "eta-prime") {
            if (!cli_set.eta_prime) cfg.eta_prime = parse_real(key, val);
        } else if (key == "grid") {
            if (cli_set.grid == 0) cfg.grid = parse_int(key, val);
        } else if (key == "out") {
            if (cli_set.out.empty()) cfg.out = val;
        } else if (key == "verbosity") {
            cfg.verbosity = parse_int(key, val);
        } else {
            config_fail(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
}

void validate(const RunConfig& cfg) {
    const auto& names = preset_names();
    if (cfg.preset.empty()) config_fail("no preset given");
    if (std::find(names.begin(), names.end(), cfg.preset) == names.end()) {
        std::string all;
        for (const auto& n : names) all += (all.empty() ? "" : ", ") + n;
        config_fail("unknown preset '" + cfg.preset + "' (known: " + all + ")");
    }
    if (cfg.eta_prime && !(*cfg.eta_prime > 0.0)) config_fail("eta-prime must be positive");
    if (cfg.grid < 0) config_fail("grid must be non-negative");
}

class Artifacts {
public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& body) {
        std::ofstream os(dir_ / name, std::ios::binary);
        os << body;
        files_.push_back(name);
    }
    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
    json list() const {
        auto f = files_;
        std::sort(f.begin(), f.end());
        return f;
    }

private:
    fs::path dir_;
    std::vector<std::string> files_;
};

// json has no infinity; large finite stand-in keeps reports parseable
json num(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? 1e308 : -1e308;
    return v;
}

json clean(json j) {
    if (j.is_object() || j.is_array()) {
        for (auto& v : j) v = clean(v);
    } else if (j.is_number_float()) {
        j = num(j.get<double>());
    }
    return j;
}

struct CertOutcome {
    bool normal = true, adapted = true, cone = true, confinement = true, expansiveness = true;
    bool all() const { return normal && adapted && cone && confinement && expansiveness; }
};

CertOutcome run_certificates(const Preset& P, Artifacts& art, int verbosity) {
    CertOutcome out;
    const auto& s = P.s;
    auto say = [&](const std::string& m) {
        if (verbosity > 0) std::cout << m << "\n";
    };
    for (const auto& c : P.certs) {
        const std::string nm = s.strata[c.stratum].name;
        json j;
        try {
            const auto rep = check_normal_expansion(s, c.stratum, P.f, 1, c.n_max, c.burn_in, 512);
            j = to_json(rep);
            out.normal = out.normal && rep.pass;
        } catch (const Error& e) {
            j = {{"check", "normal_expansion"}, {"pass", false}, {"error", e.what()}};
            out.normal = false;
        }
        art.write_json("cert_normal_expansion_" + nm + ".json", clean(j));
        say("normal_expansion " + nm + (j["pass"].get<bool>() ? " pass" : " FAIL"));

        if (c.adapted) {
            json a;
            try {
                const auto m = build_adapted_metric(s, c.stratum, P.f);
                const auto k = verify_adapted(m, s, P.f);
                a = to_json(m, k, nm);
                a["normal_beats_rate"] = k.normal_beats_rate;
                out.adapted = out.adapted && k.pass;
            } catch (const Error& e) {
                a = {{"check", "adapted_metric"}, {"pass", false}, {"error", e.what()}};
                out.adapted = false;
            }
            art.write_json("cert_adapted_metric_" + nm + ".json", clean(a));
            say("adapted_metric " + nm + (a["pass"].get<bool>() ? " pass" : " FAIL"));
        }
        if (c.cone) {
            json a;
            try {
                const auto cf = build_cone_field(s, c.stratum, P.f);
                const auto k = check_cone_invariance(cf, s, P.f);
                const auto kp = check_cone_invariance(cf, s, P.fp);
                a = to_json(cf, k, nm);
                a["perturbed"] = {{"pass", kp.pass()}, {"lambda", kp.min_growth}, {"C_min", kp.min_ratio}};
                a["pass"] = k.pass() && kp.pass();
                out.cone = out.cone && k.pass() && kp.pass();
            } catch (const Error& e) {
                a = {{"check", "cone_field"}, {"pass", false}, {"error", e.what()}};
                out.cone = false;
            }
            art.write_json("cert_cone_field_" + nm + ".json", clean(a));
            say("cone_field " + nm + (a["pass"].get<bool>() ? " pass" : " FAIL"));
        }
    }
    for (const auto& c : P.confine) {
        const std::string nm = s.strata[c.stratum].name;
        const auto v = confinement_check(s, c.stratum, P.f, c.params);
        json j{{"check", "confinement"},
               {"pass", v.confined},
               {"worst_sample", {{"stratum", nm}}},
               {"parameters",
                {{"eta", c.params.eta},
                 {"horizon", c.params.horizon},
                 {"grid", c.params.grid},
                 {"tube", c.params.tube},
                 {"starts", v.starts},
                 {"longest", v.longest}}}};
        if (v.witness) j["witness"] = std::vector<double>(v.witness->data(), v.witness->data() + v.witness->size());
        out.confinement = out.confinement && v.confined;
        art.write_json("cert_confinement_" + nm + ".json", clean(j));
        say("confinement " + nm + (v.confined ? " pass" : " FAIL"));

        // exit times on an evenly thinned set of tube starts
        auto starts = detail::tube_starts(s, c.stratum, c.params);
        const std::size_t cap = 2048;
        if (starts.size() > cap) {
            std::vector<Vec> thin;
            const double step = static_cast<double>(starts.size()) / cap;
            for (std::size_t i = 0; i < cap; ++i) thin.push_back(starts[static_cast<std::size_t>(i * step)]);
            starts.swap(thin);
        }
        std::ostringstream os;
        write_exit_time_csv(os, exit_time_table(s, c.stratum, P.f, starts, c.params));
        art.write("exit_times_" + nm + ".csv", os.str());
    }
    for (const auto& e : P.expans) {
        const std::string nm = s.strata[e.stratum].name;
        const auto r = expansiveness_search(s, e.stratum, P.f, e.eps, e.horizon);
        json j{{"check", "expansiveness"},
               {"pass", !r.found},
               {"parameters", {{"eps", e.eps}, {"horizon", e.horizon}, {"pairs_checked", r.pairs_checked}}}};
        if (r.found)
            j["worst_sample"] = {{"stratum", nm},
                                 {"a", {{"plaque", r.a.plaque}, {"node", r.a.node}}},
                                 {"b", {{"plaque", r.b.plaque}, {"node", r.b.node}}}};
        out.expansiveness = out.expansiveness && !r.found;
        art.write_json("cert_expansiveness_" + nm + ".json", clean(j));
        say("expansiveness " + nm + (r.found ? " FAIL" : " pass"));
    }
    return out;
}

int execute(const RunConfig& cfg) {
    Preset P;
    try {
        P = make_preset(cfg.preset, cfg.t, cfg.eta_prime, cfg.grid);
    } catch (const ConfigError& e) {
        config_fail(e.what());
    }
    const fs::path dir = cfg.out.empty() ? fs::path("lamina-out") / cfg.preset : fs::path(cfg.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) config_fail("cannot create output directory " + dir.string() + ": " + ec.message());
    Artifacts art(dir);

    json report;
    report["preset"] = cfg.preset;
    report["t"] = P.t;
    report["eta_prime"] = P.eta_prime;
    report["command"] = cfg.command;

    {
        std::ostringstream os;
        write_stratification_csv(os, P.s);
        art.write("stratification.csv", os.str());
    }

    const CertOutcome certs = run_certificates(P, art, cfg.verbosity);
    report["certificates"] = {{"normal_expansion", certs.normal},
                              {"adapted_metric", certs.adapted},
                              {"cone_field", certs.cone},
                              {"confinement", certs.confinement},
                              {"expansiveness", certs.expansiveness}};

    int code = certs.all() ? 0 : 2;
    if (cfg.command == "run") {
        try {
            const auto R = persist_stratification(P.s, P.f, P.fp, P.eta_prime);
            json eng = to_json(R, P.eta_prime, P.t);
            const auto fr = check_frontier_and_coherence(P.s, &R.cloud);
            eng["frontier"] = {{"pass", fr.pass()}, {"violations", fr.violations}};
            eng["fiber_defect"] = R.fiber_defect;
            report["engine"] = clean(eng);
            if (cfg.preset == "doubling-affine") {
                // theta = 0 is node 0 of the single circle plaque
                report["sigma_at_0"] = R.field.disp[0][0][0][1];
            }
            {
                std::ostringstream os;
                write_stratification_csv(os, P.s, &R.cloud);
                art.write("stratification_perturbed.csv", os.str());
            }
            for (int i = 0; i < P.s.size(); ++i) {
                std::ostringstream os;
                write_embedding_csv(os, P.s, R, i);
                art.write("embedding_" + P.s.strata[i].name + ".csv", os.str());
            }
            if (cfg.verbosity > 0) {
                char buf[256];
                std::snprintf(buf, sizeof buf, "engine: %d sweeps, contraction %.6g, residual %.3g, displacement %.6g",
                              R.iterations, R.contraction_ratio, R.residual_max, R.displacement_sup);
                std::cout << buf << "\n";
            }
        } catch (const Error& e) {
            report["engine"] = {{"error", e.what()}};
            std::cerr << "lamina: engine error: " << e.what() << "\n";
            code = 3;
        }
    }
    report["exit_code"] = code;
    json files = art.list();
    files.push_back("report.json");
    report["files"] = files;
    art.write_json("report.json", report);
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Persistence of normally expanded stratifications of laminations"};
    app.require_subcommand(1);
    RunConfig cfg;
    RunConfig cli_set;
    std::string config_path;
    double t = 0.0, eta = 0.0;
    for (auto* sub : {app.add_subcommand("run", "certificates, then persistence"),
                      app.add_subcommand("certify", "certificates only")}) {
        sub->add_option("--preset", cli_set.preset, "preset name");
        sub->add_option("--out", cli_set.out, "output directory");
        sub->add_option("--grid", cli_set.grid, "grid density override (0 = preset default)");
        sub->add_option("--config", config_path, "key=value configuration file");
        sub->add_option("--verbosity", cli_set.verbosity, "0 silences progress lines");
        if (sub->get_name() == "run") {
            sub->add_option("--t", t, "perturbation size");
            sub->add_option("--eta-prime", eta, "fiber cap");
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    auto* sub = app.get_subcommands().front();
    cfg.command = sub->get_name();
    if (sub->count("--t")) cli_set.t = t;
    if (sub->count("--eta-prime")) cli_set.eta_prime = eta;
    if (cli_set.t && !std::isfinite(*cli_set.t)) config_fail("t must be finite");

    cfg.preset = cli_set.preset;
    cfg.t = cli_set.t;
    cfg.eta_prime = cli_set.eta_prime;
    cfg.grid = cli_set.grid;
    cfg.out = cli_set.out;
    cfg.verbosity = cli_set.verbosity;
    if (!config_path.empty()) read_config(config_path, cfg, cli_set);
    validate(cfg);
    try {
        return execute(cfg);
    } catch (const Error& e) {
        std::cerr << "lamina: " << e.what() << "\n";
        return 3;
    }
}
