#include "mft/cli.hpp"

#include "mft/bubble.hpp"
#include "mft/green.hpp"
#include "mft/mfsolve.hpp"
#include "mft/shadow.hpp"
#include "mft/todasys.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <thread>

namespace mft {

namespace {

using nlohmann::ordered_json;

// ---- rationals in units of pi ------------------------------------------

Rat rat_from_json(const ordered_json& j, const std::string& key) {
    try {
        if (j.is_number_integer()) return Rat(j.get<long long>());
        if (j.is_string()) return Rat(j.get<std::string>());
    } catch (const std::exception&) {
    }
    throw CliValidationError("field '" + key +
                             "' must be an integer or a rational string like \"9/2\"");
}

std::string rat_to_string(const Rat& r) {
    std::ostringstream os;
    os << r;
    return os.str();
}

double rat_times_pi(const Rat& r) {
    return M_PI * double(numerator(r)) / double(denominator(r));
}

bool is_critical_second(const Rat& r) {  // r pi on the 4 pi lattice
    return r > 0 && denominator(r) == 1 && numerator(r) % 4 == 0;
}

bool in_first_windows(const Rat& r) {  // r pi in (0,4pi) or (4pi,8pi)
    return r > 0 && r < 8 && r != 4;
}

// ---- config parsing -----------------------------------------------------

const char* const kCommands[] = {"degree",     "green-check", "solve-mf",
                                 "solve-shadow", "solve-toda", "continue",
                                 "bubble-check"};

void require_keys(const ordered_json& j, std::initializer_list<const char*> known,
                  const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw CliValidationError("unknown key '" + it.key() + "' in " + where);
    }
}

WeightSpec weight_from_json(const ordered_json& j, const std::string& where) {
    WeightSpec spec;
    if (!j.is_array()) throw CliValidationError(where + " must be a list of terms");
    for (const ordered_json& t : j) {
        require_keys(t, {"coef", "k1", "k2", "f1", "f2"}, where);
        WeightTerm term;
        term.coef = t.value("coef", 0.0);
        term.k1 = t.value("k1", 0);
        term.k2 = t.value("k2", 0);
        for (auto [key, flag] : {std::pair{"f1", &term.sin1}, {"f2", &term.sin2}}) {
            std::string f = t.value(key, "cos");
            if (f != "cos" && f != "sin")
                throw CliValidationError(where + ": trig factor must be cos or sin");
            *flag = (f == "sin");
        }
        spec.terms.push_back(term);
    }
    return spec;
}

ordered_json weight_to_json(const WeightSpec& spec) {
    ordered_json out = ordered_json::array();
    for (const WeightTerm& t : spec.terms)
        out.push_back({{"coef", t.coef},
                       {"k1", t.k1},
                       {"k2", t.k2},
                       {"f1", t.sin1 ? "sin" : "cos"},
                       {"f2", t.sin2 ? "sin" : "cos"}});
    return out;
}

void validate_grid(int n) {
    if (n < 16 || n > 4096 || (n & (n - 1)) != 0)
        throw CliValidationError(
            "grid size must be a power of two between 16 and 4096");
}

// ---- csv helpers --------------------------------------------------------

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << text;
}

// ---- command implementations -------------------------------------------

void run_degree(const RunConfig& cfg, RunReport& rep) {
    SingularData data;
    data.chi = cfg.chi;
    data.alphas = cfg.alphas;
    data.betas = cfg.betas;
    try {
        data.validate();
    } catch (const std::exception& e) {
        throw CliValidationError(e.what());
    }

    if (cfg.rho_over_pi) {
        Int d;
        try {
            d = mean_field_degree(data, *cfg.rho_over_pi);
        } catch (const std::exception& e) {
            throw CliValidationError(e.what());
        }
        rep.results.emplace_back("degree", d.str());
        rep.checks.push_back({"mean-field degree computed", true});
        return;
    }

    Rho1Window window;
    if (cfg.window == "(0,4pi)")
        window = Rho1Window::below_4pi;
    else if (cfg.window == "(4pi,8pi)")
        window = Rho1Window::between_4pi_8pi;
    else
        throw CliValidationError("window must be \"(0,4pi)\" or \"(4pi,8pi)\"");
    if (cfg.k_max < 0 || cfg.k_max > 512)
        throw CliValidationError("k_max must lie in [0, 512]");

    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("TODA_DEGREE_THREADS")) {
        long cap = std::strtol(env, nullptr, 10);
        if (cap < 1)
            throw CliValidationError("TODA_DEGREE_THREADS must be a positive integer");
        threads = std::min<unsigned>(threads, unsigned(cap));
    }
    threads = std::min<unsigned>(threads, unsigned(cfg.k_max) + 1);

    std::vector<Int> table(cfg.k_max + 1);
    std::vector<std::future<void>> work;
    std::atomic<int> next{0};
    for (unsigned t = 0; t < threads; ++t)
        work.push_back(std::async(std::launch::async, [&] {
            for (int k; (k = next.fetch_add(1)) <= cfg.k_max;)
                table[k] = toda_degree(cfg.chi, window, k);
        }));
    for (auto& w : work) w.get();

    std::string csv = "k,d\n", shown;
    for (int k = 0; k <= cfg.k_max; ++k) {
        csv += std::to_string(k) + "," + table[k].str() + "\n";
        shown += (k ? "," : "") + table[k].str();
    }
    std::string path = cfg.out + "/degrees.csv";
    write_text(path, csv);
    rep.artifacts.push_back(path);
    rep.results.emplace_back("degrees", shown);
    rep.checks.push_back({"degree table computed", true});
}

void run_green_check(const RunConfig& cfg, RunReport& rep) {
    // the pole sits on a node of every admissible grid so the theta form and
    // the discrete-Dirac cross-check see the same singular point
    Vec2 p = cfg.points.empty() ? Vec2{0.25, 0.5} : cfg.points[0];

    // closed form vs the discrete-Dirac construction, away from the pole
    auto diff_at = [&](int n) {
        TorusGrid g(n);
        TorusField spectral = green_spectral_field(p, g);
        double err = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Vec2 x{i * g.spacing(), j * g.spacing()};
                if (theta_dist({x[0] - p[0], x[1] - p[1]}) < 0.1) continue;
                err = std::max(err, std::abs(spectral(i, j) - green_eval(p, x)));
            }
        return err;
    };
    double integral = green_mean_quadrature(p, TorusGrid(cfg.grid));
    double diff = diff_at(cfg.grid);
    rep.results.emplace_back("integral_G", num(integral));
    rep.results.emplace_back("theta_vs_spectral_sup", num(diff));
    rep.checks.push_back({"Green function integrates to zero (1e-8)",
                          std::abs(integral) <= 1e-8});
    if (cfg.grid >= 64) {
        double coarse = diff_at(cfg.grid / 2);
        double order = std::log2(coarse / diff);
        rep.results.emplace_back("convergence_order", num(order));
        rep.checks.push_back({"theta vs spectral order >= 1.8", order >= 1.8});
    }
}

TorusField build_weight_with_singular(
    const WeightSpec& spec, const std::vector<std::pair<Vec2, Rat>>& singular,
    TorusGrid grid) {
    TorusField h = spec.build(grid);
    for (const auto& [q, alpha] : singular) {
        double a = double(numerator(alpha)) / double(denominator(alpha));
        TorusField s = singular_weight(q, 4.0 * M_PI * a, grid);
        for (size_t k = 0; k < h.mutable_values().size(); ++k)
            h.mutable_values()[k] *= s.values()[k];
    }
    return h;
}

void run_solve_mf(const RunConfig& cfg, RunReport& rep) {
    TorusGrid g(cfg.grid);
    if (!(cfg.rho1_over_pi > 0))
        throw CliValidationError("first parameter must be positive");
    MeanFieldProblem prob(rat_times_pi(cfg.rho1_over_pi),
                          build_weight_with_singular(cfg.h1, cfg.singular, g));
    prob.singular.chi = 0;
    for (const auto& [q, alpha] : cfg.singular) prob.singular.alphas.push_back(alpha);
    // exact critical-set gate before any compute
    if (critical_sets(prob.singular, cfg.rho1_over_pi + 1)
            .sigma.contains(cfg.rho1_over_pi))
        throw CliValidationError("first parameter lies on the critical set");

    auto [u, nrep] = newton_mf(TorusField(g), prob, cfg.tol);
    std::string path = cfg.out + "/u.csv";
    write_csv_file(u, path);
    rep.artifacts.push_back(path);
    rep.results.emplace_back("iterations", std::to_string(nrep.iterations));
    rep.results.emplace_back("residual_sup", num(nrep.final_residual_sup));
    rep.results.emplace_back("max_u", num(u.sup_norm()));
    rep.checks.push_back({"residual within tolerance",
                          nrep.final_residual_sup <= cfg.tol});
}

void run_solve_shadow(const RunConfig& cfg, RunReport& rep) {
    TorusGrid g(cfg.grid);
    if (is_critical_second(cfg.rho2_over_pi))
        throw CliValidationError("second parameter on the critical lattice");
    ShadowProblem prob(rat_times_pi(cfg.rho2_over_pi), cfg.h1.build(g),
                       cfg.h2.build(g));
    for (const auto& [q, alpha] : cfg.singular)
        prob.fixed_singular.emplace_back(
            q, double(numerator(alpha)) / double(denominator(alpha)));
    if (cfg.points.empty())
        throw CliValidationError("solve-shadow needs at least one movable point");

    ShadowState st = newton_shadow(prob, ShadowState(cfg.points, TorusField(g)),
                                   cfg.tol);
    MorseReport morse = morse_index(st, prob, 6);

    std::string wpath = cfg.out + "/w.csv";
    write_csv_file(st.w, wpath);
    rep.artifacts.push_back(wpath);

    ordered_json sj;
    sj["points"] = ordered_json::array();
    for (const Vec2& q : st.points) sj["points"].push_back({q[0], q[1]});
    sj["residual_field_sup"] = st.residual_field_sup;
    sj["grad_fQ_norms"] = st.grad_fQ_norms;
    sj["morse_index"] = morse.index;
    sj["eigenvalues"] = morse.eigenvalues;
    std::string spath = cfg.out + "/shadow.json";
    write_text(spath, sj.dump(2) + "\n");
    rep.artifacts.push_back(spath);

    double gmax = 0.0;
    for (double v : st.grad_fQ_norms) gmax = std::max(gmax, v);
    rep.results.emplace_back("residual_field_sup", num(st.residual_field_sup));
    rep.results.emplace_back("max_grad_fQ", num(gmax));
    rep.results.emplace_back("morse_index", std::to_string(morse.index));
    rep.checks.push_back({"field residual within tolerance",
                          st.converged && st.residual_field_sup <= cfg.tol});
    rep.checks.push_back({"point gradients below 1e-6", gmax <= 1e-6});
}

void gate_toda_parameters(const Rat& r1, const Rat& r2) {
    if (!in_first_windows(r1))
        throw CliValidationError("first parameter outside the solvability windows");
    if (is_critical_second(r2))
        throw CliValidationError("second parameter on the critical lattice");
}

void run_solve_toda(const RunConfig& cfg, RunReport& rep) {
    TorusGrid g(cfg.grid);
    gate_toda_parameters(cfg.rho1_over_pi, cfg.rho2_over_pi);
    TodaProblem prob(cfg.h1.build(g), cfg.h2.build(g));
    TodaState z(TodaForm::V, TorusField(g), TorusField(g),
                rat_times_pi(cfg.rho1_over_pi), rat_times_pi(cfg.rho2_over_pi));
    auto [st, nrep] = newton_toda(z, prob, {z.rho1, z.rho2}, cfg.tol);

    for (auto [field, name] : {std::pair{&st.f1, "v1.csv"}, {&st.f2, "v2.csv"}}) {
        std::string path = cfg.out + "/" + name;
        write_csv_file(*field, path);
        rep.artifacts.push_back(path);
    }
    rep.results.emplace_back("iterations", std::to_string(nrep.iterations));
    rep.results.emplace_back("residual_sup", num(nrep.final_residual_sup));
    rep.results.emplace_back("max_v1", num(st.f1.sup_norm()));
    rep.checks.push_back({"residual within tolerance",
                          nrep.final_residual_sup <= cfg.tol});
}

void run_continue(const RunConfig& cfg, RunReport& rep) {
    TorusGrid g(cfg.grid);
    if (cfg.path_over_pi.size() < 2)
        throw CliValidationError("continue needs a path of at least two (rho1, rho2) nodes");
    for (const auto& [r1, r2] : cfg.path_over_pi) gate_toda_parameters(r1, r2);

    TodaProblem prob(cfg.h1.build(g), cfg.h2.build(g));
    auto [r1, r2] = cfg.path_over_pi.front();
    TodaState z(TodaForm::V, TorusField(g), TorusField(g), rat_times_pi(r1),
                rat_times_pi(r2));
    auto [start, srep] = newton_toda(z, prob, {z.rho1, z.rho2},
                                     cfg.controller.tol);

    ContinuationController ctrl;
    ctrl.step = cfg.controller.step * M_PI;
    ctrl.step_min = cfg.controller.step_min * M_PI;
    ctrl.step_max = cfg.controller.step_max * M_PI;
    ctrl.tol = cfg.controller.tol;
    std::vector<std::pair<double, double>> path;
    for (size_t i = 1; i < cfg.path_over_pi.size(); ++i)
        path.emplace_back(rat_times_pi(cfg.path_over_pi[i].first),
                          rat_times_pi(cfg.path_over_pi[i].second));
    ContinuationRun run = continue_branch(start, prob, path, ctrl);

    std::string csv = "rho1,max_v1,concentration\n";
    for (const TodaState& s : run.branch) {
        BlowupDiagnostics dg = blowup_diagnostics(s, prob);
        double conc = dg.points.empty() ? 0.0 : dg.concentration[0];
        csv += num(s.rho1) + "," + num(s.f1.sup_norm()) + "," + num(conc) + "\n";
    }
    std::string path_csv = cfg.out + "/branch.csv";
    write_text(path_csv, csv);
    rep.artifacts.push_back(path_csv);

    bool all_conv = true;
    for (const NewtonReport& r : run.reports) all_conv = all_conv && r.converged;
    rep.results.emplace_back("states", std::to_string(run.branch.size()));
    rep.results.emplace_back("termination", run.termination);
    rep.results.emplace_back("final_rho1", num(run.branch.back().rho1));
    rep.checks.push_back({"every stored state converged", all_conv});
}

void run_bubble_check(const RunConfig& cfg, RunReport& rep) {
    TorusGrid g(cfg.grid);
    if (is_critical_second(cfg.rho2_over_pi))
        throw CliValidationError("second parameter on the critical lattice");
    TorusField h1 = cfg.h1.build(g), h2 = cfg.h2.build(g);
    ShadowProblem sp(rat_times_pi(cfg.rho2_over_pi), h1, h2);
    std::vector<Vec2> seeds = cfg.points.empty()
                                  ? std::vector<Vec2>{{0.02, 0.03}}
                                  : cfg.points;
    ShadowState st = newton_shadow(sp, ShadowState(seeds, TorusField(g)), 1e-10);

    std::vector<double> lambdas =
        cfg.lambdas.empty() ? std::vector<double>{10, 11, 12, 13, 14} : cfg.lambdas;
    BubbleProblem bp{h1, rat_times_pi(cfg.rho2_over_pi), {}};
    RateFit fit;
    try {
        fit = rate_law_fit(st, bp, lambdas, 0.1, g);
    } catch (const std::runtime_error& e) {
        if (std::string(e.what()).find("resolution ceiling") != std::string::npos)
            throw CliResolutionError(e.what());
        throw;
    }

    std::string csv = "lambda,rho1_minus_4pi,predicted\n";
    for (size_t k = 0; k < fit.lambdas.size(); ++k)
        csv += num(fit.lambdas[k]) + "," + num(fit.offsets[k]) + "," +
               num(fit.predicted[k]) + "\n";
    std::string path = cfg.out + "/rate.csv";
    write_text(path, csv);
    rep.artifacts.push_back(path);

    double rel = std::abs(fit.coefficient / fit.analytic - 1.0);
    rep.results.emplace_back("coefficient", num(fit.coefficient));
    rep.results.emplace_back("analytic", num(fit.analytic));
    rep.results.emplace_back("relative_gap", num(rel));
    rep.checks.push_back({"fitted coefficient within 10% of the local law",
                          rel <= 0.1});
}

}  // namespace

// ---- weight construction ------------------------------------------------

TorusField WeightSpec::build(TorusGrid grid) const {
    if (terms.empty()) return sample(grid, [](double, double) { return 1.0; });
    return sample(grid, [&](double x1, double x2) {
        double v = 0.0;
        for (const WeightTerm& t : terms) {
            double a1 = 2 * M_PI * t.k1 * x1, a2 = 2 * M_PI * t.k2 * x2;
            v += t.coef * (t.sin1 ? std::sin(a1) : std::cos(a1)) *
                 (t.sin2 ? std::sin(a2) : std::cos(a2));
        }
        return v;
    });
}

// ---- config parse / serialize ------------------------------------------

RunConfig RunConfig::parse(const std::string& json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const std::exception& e) {
        throw CliValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CliValidationError("config must be a JSON object");
    require_keys(j,
                 {"command", "grid", "seed", "out", "quiet", "tol", "chi", "window",
                  "k_max", "alphas", "betas", "rho", "rho1", "rho2", "h1", "h2",
                  "points", "singular", "path", "controller", "lambdas"},
                 "config");

    RunConfig cfg;
    try {
    if (!j.contains("command") || !j["command"].is_string())
        throw CliValidationError("config needs a string field 'command'");
    cfg.command = j["command"].get<std::string>();
    if (std::find(std::begin(kCommands), std::end(kCommands), cfg.command) ==
        std::end(kCommands))
        throw CliValidationError("unknown command '" + cfg.command + "'");

    cfg.grid = j.value("grid", cfg.grid);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out = j.value("out", cfg.out);
    cfg.quiet = j.value("quiet", cfg.quiet);
    cfg.tol = j.value("tol", cfg.tol);
    validate_grid(cfg.grid);
    if (!(cfg.tol > 0) || cfg.tol > 1e-2)
        throw CliValidationError("tol must lie in (0, 1e-2]");

    cfg.chi = j.value("chi", cfg.chi);
    cfg.window = j.value("window", cfg.window);
    cfg.k_max = j.value("k_max", cfg.k_max);
    for (auto [key, dst] : {std::pair{"alphas", &cfg.alphas}, {"betas", &cfg.betas}})
        if (j.contains(key))
            for (const ordered_json& a : j[key])
                dst->push_back(rat_from_json(a, key));
    if (j.contains("rho")) cfg.rho_over_pi = rat_from_json(j["rho"], "rho");
    if (j.contains("rho1")) cfg.rho1_over_pi = rat_from_json(j["rho1"], "rho1");
    if (j.contains("rho2")) cfg.rho2_over_pi = rat_from_json(j["rho2"], "rho2");
    if (j.contains("h1")) cfg.h1 = weight_from_json(j["h1"], "h1");
    if (j.contains("h2")) cfg.h2 = weight_from_json(j["h2"], "h2");

    if (j.contains("points"))
        for (const ordered_json& p : j["points"]) {
            if (!p.is_array() || p.size() != 2)
                throw CliValidationError("points must be [x1, x2] pairs");
            cfg.points.push_back({p[0].get<double>(), p[1].get<double>()});
        }
    if (j.contains("singular"))
        for (const ordered_json& s : j["singular"]) {
            require_keys(s, {"point", "alpha"}, "singular");
            if (!s.contains("point") || !s.contains("alpha"))
                throw CliValidationError("singular entries need 'point' and 'alpha'");
            const ordered_json& p = s["point"];
            if (!p.is_array() || p.size() != 2)
                throw CliValidationError("singular point must be [x1, x2]");
            cfg.singular.emplace_back(Vec2{p[0].get<double>(), p[1].get<double>()},
                                      rat_from_json(s["alpha"], "alpha"));
        }
    if (j.contains("path"))
        for (const ordered_json& node : j["path"]) {
            if (!node.is_array() || node.size() != 2)
                throw CliValidationError("path nodes must be [rho1, rho2] pairs");
            cfg.path_over_pi.emplace_back(rat_from_json(node[0], "path"),
                                          rat_from_json(node[1], "path"));
        }
    if (j.contains("controller")) {
        const ordered_json& c = j["controller"];
        require_keys(c, {"step", "step_min", "step_max", "tol"}, "controller");
        cfg.controller.step = c.value("step", cfg.controller.step);
        cfg.controller.step_min = c.value("step_min", cfg.controller.step_min);
        cfg.controller.step_max = c.value("step_max", cfg.controller.step_max);
        cfg.controller.tol = c.value("tol", cfg.controller.tol);
    }
    if (j.contains("lambdas"))
        for (const ordered_json& l : j["lambdas"]) cfg.lambdas.push_back(l.get<double>());
    } catch (const ordered_json::exception& e) {
        throw CliValidationError(std::string("config field has the wrong type: ") +
                                 e.what());
    }
    return cfg;
}

std::string RunConfig::serialize() const {
    ordered_json j;
    j["command"] = command;
    j["grid"] = grid;
    j["seed"] = seed;
    j["out"] = out;
    j["quiet"] = quiet;
    j["tol"] = tol;
    j["chi"] = chi;
    j["window"] = window;
    j["k_max"] = k_max;
    j["alphas"] = ordered_json::array();
    for (const Rat& a : alphas) j["alphas"].push_back(rat_to_string(a));
    j["betas"] = ordered_json::array();
    for (const Rat& b : betas) j["betas"].push_back(rat_to_string(b));
    if (rho_over_pi) j["rho"] = rat_to_string(*rho_over_pi);
    j["rho1"] = rat_to_string(rho1_over_pi);
    j["rho2"] = rat_to_string(rho2_over_pi);
    j["h1"] = weight_to_json(h1);
    j["h2"] = weight_to_json(h2);
    j["points"] = ordered_json::array();
    for (const Vec2& p : points) j["points"].push_back({p[0], p[1]});
    j["singular"] = ordered_json::array();
    for (const auto& [q, alpha] : singular)
        j["singular"].push_back(
            {{"point", {q[0], q[1]}}, {"alpha", rat_to_string(alpha)}});
    j["path"] = ordered_json::array();
    for (const auto& [r1, r2] : path_over_pi)
        j["path"].push_back({rat_to_string(r1), rat_to_string(r2)});
    j["controller"] = {{"step", controller.step},
                       {"step_min", controller.step_min},
                       {"step_max", controller.step_max},
                       {"tol", controller.tol}};
    j["lambdas"] = lambdas;
    return j.dump(2) + "\n";
}

// ---- report -------------------------------------------------------------

bool RunReport::all_pass() const {
    for (const RunCheck& c : checks)
        if (!c.pass) return false;
    return true;
}

std::string RunReport::to_json() const {
    ordered_json j;
    j["config"] = ordered_json::parse(config_echo);
    j["results"] = ordered_json::object();
    for (const auto& [k, v] : results) j["results"][k] = v;
    j["artifacts"] = artifacts;
    j["checks"] = ordered_json::array();
    for (const RunCheck& c : checks)
        j["checks"].push_back({{"name", c.name}, {"pass", c.pass}});
    j["all_pass"] = all_pass();
    j["elapsed_ms"] = elapsed_ms;
    return j.dump(2) + "\n";
}

// ---- dispatch -----------------------------------------------------------

RunReport run(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    RunReport rep;
    rep.config_echo = cfg.serialize();
    std::error_code ec;
    std::filesystem::create_directories(cfg.out, ec);
    if (ec) throw CliValidationError("cannot create output directory " + cfg.out);

    if (cfg.command == "degree")
        run_degree(cfg, rep);
    else if (cfg.command == "green-check")
        run_green_check(cfg, rep);
    else if (cfg.command == "solve-mf")
        run_solve_mf(cfg, rep);
    else if (cfg.command == "solve-shadow")
        run_solve_shadow(cfg, rep);
    else if (cfg.command == "solve-toda")
        run_solve_toda(cfg, rep);
    else if (cfg.command == "continue")
        run_continue(cfg, rep);
    else if (cfg.command == "bubble-check")
        run_bubble_check(cfg, rep);
    else
        throw CliValidationError("unknown command '" + cfg.command + "'");

    rep.elapsed_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return rep;
}

int cli_main(int argc, char** argv) {
    CLI::App app{"degree counting, torus solvers and bubbling diagnostics"};
    std::string config_path, out_override;
    long seed_override = -1;
    int grid_override = 0;
    bool quiet = false;
    app.add_option("--config", config_path, "JSON run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--out", out_override, "output directory override");
    app.add_option("--seed", seed_override, "seed override");
    app.add_option("--grid", grid_override, "grid size override");
    app.add_flag("--quiet", quiet, "suppress the report on stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "{\"error\":\"validation\",\"reason\":" << ordered_json(e.what())
                  << "}\n";
        return 2;
    }

    auto fail = [&](const char* kind, const std::string& reason, int code) {
        std::cerr << "{\"error\":\"" << kind
                  << "\",\"reason\":" << ordered_json(reason) << "}\n";
        return code;
    };

    try {
        std::ifstream is(config_path, std::ios::binary);
        std::stringstream ss;
        ss << is.rdbuf();
        RunConfig cfg = RunConfig::parse(ss.str());
        if (!out_override.empty()) cfg.out = out_override;
        if (seed_override >= 0) cfg.seed = seed_override;
        if (grid_override > 0) {
            cfg.grid = grid_override;
            validate_grid(cfg.grid);
        }
        if (quiet) cfg.quiet = true;

        RunReport rep = run(cfg);
        write_text(cfg.out + "/report.json", rep.to_json());
        if (!cfg.quiet) std::cout << rep.to_json();
        return rep.all_pass() ? 0 : 1;
    } catch (const CliValidationError& e) {
        return fail("validation", e.what(), 2);
    } catch (const CliResolutionError& e) {
        return fail("resolution", e.what(), 4);
    } catch (const NewtonDivergence& e) {
        return fail("divergence", e.what(), 3);
    } catch (const std::invalid_argument& e) {
        return fail("validation", e.what(), 2);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 1);
    }
}

}  // namespace mft
