#pragma once

// Command-line front end. `run` is kept separate from main so tests can drive it.

#include "bsde/bsde.hpp"
#include "bsde/io.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace bsde::cli {

using ojson = nlohmann::ordered_json;

enum Exit : int {
    Ok = 0,
    Usage = 1,
    Parse = 2,
    SolveFailure = 3,
    ProbeViolation = 4,
    ConclusionFails = 5,
    Finding = 6,
};

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// 12 significant digits; -0 prints as 0, non-finite values as strings.
inline ojson num(double v) {
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    double r = std::strtod(buf, nullptr);
    if (r == 0.0) r = 0.0;
    return r;
}

inline ojson vec(const Vector& v) {
    ojson a = ojson::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
    return a;
}

inline ojson mat(const Matrix& m) {
    ojson a = ojson::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec(m.row(i).transpose()));
    return a;
}

inline std::string path_of(const ScenarioTree& tree, Atom a) { return detail::path_string(tree.path(a)); }

struct Inputs {
    ojson digests = ojson::object();

    io::json load(const std::string& label, const std::string& path) {
        const std::string text = io::read_file(path);
        digests[label] = ojson{{"path", path}, {"fnv1a64", hex64(fnv1a64(text))}};
        return io::parse_text(text, path);
    }
};

struct Common {
    std::string tree, driver, terminal, report, mode = "standard", problem1, problem2, static_map, family;
    int time = 0;
    int probe_grid = 21;
    int probes = 20;
    double tolerance = -1.0;
    bool risk = false;
};

inline ProbeConfig probe_config(const Common& c) {
    ProbeConfig p;
    p.y_count = std::max(2, c.probe_grid);
    return p;
}

inline ojson findings_json(const DriverProbeReport& rep) {
    ojson out = ojson::array();
    for (const auto& f : rep.findings)
        out.push_back(ojson{{"check", f.check}, {"time", f.time}, {"path", f.path}, {"detail", f.detail}});
    return out;
}

inline ojson probe_json(const DriverProbeReport& rep) {
    return ojson{{"verdict", rep.verdict()},
                 {"probes", rep.probes},
                 {"max_condition_number", num(rep.max_condition_number)},
                 {"findings", findings_json(rep)}};
}

inline ojson solution_json(const ScenarioTree& tree, const BsdeSolution& sol) {
    ojson levels = ojson::array();
    for (int t = sol.first_time(); t <= sol.last_time(); ++t) {
        ojson rows = ojson::array();
        for (Atom a : tree.atoms_at(t)) {
            ojson row{{"path", path_of(tree, a)}, {"y", vec(sol.y.at(a))}};
            if (t < sol.last_time()) {
                const auto& d = sol.diagnostics[static_cast<std::size_t>(t - sol.first_time())][a.index];
                row["z"] = mat(sol.z.at(a));
                row["method"] = d.method;
                row["iterations"] = d.iterations;
                row["residual"] = num(d.residual);
            }
            rows.push_back(std::move(row));
        }
        levels.push_back(ojson{{"time", t}, {"atoms", std::move(rows)}});
    }
    return levels;
}

inline ScenarioTree load_tree(Inputs& in, const Common& c) {
    return io::parse_tree(io::Node(in.load("tree", c.tree), c.tree));
}

inline int cmd_solve(const Common& c, ojson& rep) {
    Inputs in;
    const ScenarioTree tree = load_tree(in, c);
    const Driver driver = io::parse_driver(io::Node(in.load("driver", c.driver), c.driver), tree.n_states());
    const Slice q = io::parse_terminal(io::Node(in.load("terminal", c.terminal), c.terminal), tree);
    rep["inputs"] = in.digests;
    DriverProbeReport probe;
    if (c.probe_grid > 0) probe = check_driver_assumptions(tree, driver, probe_config(c));
    rep["driver"] = ojson{{"name", driver.name}, {"dim", driver.dim}};
    rep["probe"] = probe_json(probe);
    Tolerances tol = default_tolerances();
    if (c.tolerance > 0) tol.solve = c.tolerance;
    try {
        const BsdeSolution sol = solve(tree, driver, q, c.time, tol);
        rep["solution"] = solution_json(tree, sol);
    } catch (const Error& e) {
        rep["error"] = e.what();
        return SolveFailure;
    }
    return probe.clean() ? Ok : ProbeViolation;
}

inline std::vector<ConditionMode> parse_modes(const std::string& s, int horizon) {
    std::vector<ConditionMode> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "standard") out.push_back(ConditionMode::Standard);
        else if (item == "alternate") out.push_back(ConditionMode::Alternate);
        else throw Error(ErrorCode::ParseError, "--mode: unknown mode '" + item + "'");
    }
    if (out.size() == 1) out.assign(static_cast<std::size_t>(horizon), out.front());
    if (out.size() != static_cast<std::size_t>(horizon))
        throw Error(ErrorCode::ParseError, "--mode: give one mode or one per time step");
    return out;
}

inline int cmd_compare(const Common& c, ojson& rep) {
    Inputs in;
    const ScenarioTree tree = load_tree(in, c);
    auto problem = [&](const std::string& label, const std::string& path) {
        const io::json j = in.load(label, path);
        const io::Node n(j, path);
        n.expect_kind("problem");
        return std::pair{io::parse_driver(n["driver"], tree.n_states()), io::parse_terminal(n["terminal"], tree)};
    };
    const auto [f1, q1] = problem("problem1", c.problem1);
    const auto [f2, q2] = problem("problem2", c.problem2);
    ComparisonOptions opt;
    opt.modes = parse_modes(c.mode, tree.horizon());
    if (c.tolerance > 0) opt.tolerance = c.tolerance;
    opt.probe = probe_config(c);
    rep["inputs"] = in.digests;

    ComparisonReport cmp;
    try {
        cmp = check_conditions(tree, f1, f2, q1, q2, opt);
    } catch (const Error& e) {
        rep["error"] = e.what();
        return SolveFailure;
    }
    ojson atoms = ojson::array();
    for (const auto& level : cmp.levels) {
        for (const auto& ac : level) {
            const Atom a{ac.time, ac.index};
            ojson comps = ojson::array();
            for (const auto& cc : ac.components)
                comps.push_back(ojson{{"y_diff", num(cc.y_diff)},
                                      {"condition_ii_gap", num(cc.condition_ii_gap)},
                                      {"min_gap", num(cc.min_gap)},
                                      {"condition_iii_margin", num(cc.condition_iii_margin)},
                                      {"margin_class", to_string(cc.iii_class)},
                                      {"row_equivalent", cc.row_equivalent}});
            atoms.push_back(ojson{{"time", ac.time},
                                  {"path", path_of(tree, a)},
                                  {"mode", ac.mode == ConditionMode::Standard ? "standard" : "alternate"},
                                  {"y1", vec(cmp.sol1.y.at(a))},
                                  {"y2", vec(cmp.sol2.y.at(a))},
                                  {"z1", mat(cmp.sol1.z.at(a))},
                                  {"z2", mat(cmp.sol2.z.at(a))},
                                  {"components", std::move(comps)},
                                  {"condition_iv_premise", ac.iv_hypothesis},
                                  {"condition_iv_ok", ac.iv_ok},
                                  {"condition_iv_detail", ac.iv_detail}});
        }
    }
    rep["atoms"] = std::move(atoms);
    const auto strict = strictness_analysis(tree, cmp, q1, q2);
    ojson eq = ojson::array();
    for (const auto& e : strict.equalities)
        eq.push_back(ojson{{"time", e.time},
                           {"path", path_of(tree, Atom{e.time, e.index})},
                           {"component", e.component},
                           {"violations", e.violations}});
    rep["strictness"] = ojson{{"premise_strict", strict.premise_strict}, {"equalities", std::move(eq)}};
    rep["verdicts"] = ojson{{"condition_i", cmp.condition_i},
                            {"condition_ii", cmp.condition_ii},
                            {"condition_iii", cmp.condition_iii},
                            {"condition_iv", cmp.condition_iv},
                            {"boundary_margins", cmp.boundary_margins},
                            {"conclusion", cmp.conclusion}};

    // optional reference value for Y^1_0 - Y^2_0 carried in problem1
    const io::json j1 = io::parse_text(io::read_file(c.problem1), c.problem1);
    if (j1.contains("reference_y0_difference")) {
        const Vector ref = io::Node(j1, c.problem1)["reference_y0_difference"].vector();
        const Vector got = cmp.sol1.y.at(tree.root()) - cmp.sol2.y.at(tree.root());
        const bool match = ref.size() == got.size() && max_abs(ref - got) <= 1e-10;
        rep["reference"] = ojson{{"y0_difference", vec(ref)}, {"computed", vec(got)}, {"matches", match}};
        if (!match) rep["reference"]["note"] = "reference value differs from the computed difference";
    }

    if (!cmp.conditions_hold()) return Finding;
    return cmp.conclusion ? Ok : ConclusionFails;
}

inline std::vector<Slice> default_family(const ScenarioTree& tree, const Slice& q) {
    const int k = q.dim();
    std::vector<Slice> fam{q, constant_slice(tree, tree.horizon(), Vector::Zero(k))};
    Slice bumped = q;
    bumped[0] += Vector::Ones(k);
    fam.push_back(std::move(bumped));
    return fam;
}

inline int cmd_nlexp(const Common& c, ojson& rep) {
    Inputs in;
    const ScenarioTree tree = load_tree(in, c);
    const Driver driver = io::parse_driver(io::Node(in.load("driver", c.driver), c.driver), tree.n_states());
    const Slice q = io::parse_terminal(io::Node(in.load("terminal", c.terminal), c.terminal), tree);
    std::vector<Slice> family;
    if (!c.family.empty()) {
        const io::json j = in.load("family", c.family);
        const io::Node n(j, c.family);
        n.expect_kind("family");
        const io::Node members = n["members"];
        for (std::size_t i = 0; i < members.size(); ++i) family.push_back(io::parse_slice(members[i], tree, tree.horizon()));
    } else {
        family = default_family(tree, q);
    }
    rep["inputs"] = in.digests;
    rep["family_size"] = family.size();
    rep["note"] = "balancedness is probed on the finite family only";
    NonlinearExpectation e;
    try {
        e = expectation_from_driver(tree, driver, family, probe_config(c));
    } catch (const Error& err) {
        rep["error"] = err.what();
        return err.code() == ErrorCode::BalancednessProbeFailed ? ProbeViolation : SolveFailure;
    }
    tree.check_time(c.time);
    const Slice v = c.risk ? risk_measure(e, q, c.time) : e.evaluate(q, c.time);
    ojson rows = ojson::array();
    for (Atom a : tree.atoms_at(c.time)) rows.push_back(ojson{{"path", path_of(tree, a)}, {"value", vec(v[a.index])}});
    rep["quantity"] = c.risk ? "risk" : "expectation";
    rep["time"] = c.time;
    rep["values"] = std::move(rows);
    return Ok;
}

inline int cmd_recover(const Common& c, ojson& rep) {
    Inputs in;
    const ScenarioTree tree = load_tree(in, c);
    const Driver driver = io::parse_driver(io::Node(in.load("driver", c.driver), c.driver), tree.n_states());
    rep["inputs"] = in.digests;
    const int t = c.time;
    tree.require_nonterminal(Atom{t, 0});
    const double tol = c.tolerance > 0 ? c.tolerance : 1e-8;

    const OneStepOracle phi = one_step_oracle(tree, driver, t);
    const EndpointOracle ends = endpoint_oracle(tree, driver, t);
    const ZeroHedgingFunction zh = zero_hedging(driver);
    if (!is_consistent_pair(tree, zh, ends, t, driver.dim)) {
        rep["error"] = "zero-hedging function and endpoints disagree";
        return SolveFailure;
    }
    const OneStepOracle via_ends = one_step_from_endpoints(tree, zh, ends);

    std::mt19937_64 rng(20240101);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_int_distribution<std::size_t> pick(0, tree.level_size(t) - 1);
    double worst = 0.0;
    ojson rows = ojson::array();
    for (int p = 0; p < c.probes; ++p) {
        const Atom a{t, pick(rng)};
        Vector y(driver.dim);
        for (auto& v : y) v = u(rng);
        GainsMatrix z(driver.dim, tree.n_states());
        for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = u(rng);
        z = canonicalize(tree, a, z);
        try {
            const Vector truth = evaluate(driver, tree, a, y, z);
            const Vector one = recover_from_one_step(tree, phi, a, y, z);
            const Vector two = recover_from_one_step(tree, via_ends, a, y, z);
            const double err = std::max(max_abs(one - truth), max_abs(two - truth));
            worst = std::max(worst, err);
            rows.push_back(ojson{{"path", path_of(tree, a)},
                                 {"y", vec(y)},
                                 {"z", mat(z)},
                                 {"driver", vec(truth)},
                                 {"from_one_step", vec(one)},
                                 {"from_endpoints", vec(two)},
                                 {"abs_error", num(err)}});
        } catch (const Error& e) {
            rep["error"] = e.what();
            rep["probes"] = std::move(rows);
            return SolveFailure;
        }
    }
    rep["time"] = t;
    rep["probes"] = std::move(rows);
    rep["max_abs_error"] = num(worst);
    rep["tolerance"] = num(tol);
    return worst <= tol ? Ok : ProbeViolation;
}

inline int cmd_extend_static(const Common& c, ojson& rep) {
    Inputs in;
    const ScenarioTree tree = load_tree(in, c);
    const StaticExpectation e = io::parse_static(io::Node(in.load("static", c.static_map), c.static_map), tree);
    const Slice q = io::parse_terminal(io::Node(in.load("terminal", c.terminal), c.terminal), tree);
    rep["inputs"] = in.digests;
    ExtensionResult r;
    try {
        r = extend_static(tree, e, q);
    } catch (const Error& err) {
        rep["error"] = err.what();
        return SolveFailure;
    }
    ojson steps = ojson::array();
    for (const auto& s : r.steps)
        steps.push_back(ojson{{"time", s.time},
                              {"path", s.path},
                              {"target", num(s.target)},
                              {"y", num(s.y)},
                              {"residual", num(s.residual)},
                              {"iterations", s.iterations}});
    ojson towers = ojson::array();
    for (const auto& tc : r.towers)
        towers.push_back(ojson{{"from_time", tc.from_time},
                               {"time", tc.time},
                               {"path", tc.path},
                               {"target", num(tc.target)},
                               {"achieved", num(tc.achieved)},
                               {"y", num(tc.y)},
                               {"y_resolved", num(tc.y_resolved)},
                               {"mismatch", num(tc.y_resolved - tc.y)},
                               {"ok", tc.ok}});
    rep["map"] = e.name;
    rep["steps"] = std::move(steps);
    rep["tower_checks"] = std::move(towers);
    if (r.certificate) {
        rep["certificate"] = ojson{{"kind", to_string(r.certificate->kind)},
                                   {"time", r.certificate->time},
                                   {"path", r.certificate->path},
                                   {"check_time", r.certificate->check_time},
                                   {"detail", r.certificate->detail}};
        return Finding;
    }
    ojson fam = ojson::array();
    for (int t = 0; t <= tree.horizon(); ++t) {
        ojson rows = ojson::array();
        for (Atom a : tree.atoms_at(t)) rows.push_back(ojson{{"path", path_of(tree, a)}, {"y", num(r.family->at(a)[0])}});
        fam.push_back(ojson{{"time", t}, {"atoms", std::move(rows)}});
    }
    rep["family"] = std::move(fam);
    return Ok;
}

inline int cmd_probe(const Common& c, ojson& rep) {
    Inputs in;
    const ScenarioTree tree = load_tree(in, c);
    const Driver driver = io::parse_driver(io::Node(in.load("driver", c.driver), c.driver), tree.n_states());
    rep["inputs"] = in.digests;
    const auto probe = check_driver_assumptions(tree, driver, probe_config(c));
    rep["probe"] = probe_json(probe);
    return probe.clean() ? Ok : ProbeViolation;
}

/// Parses arguments, runs one subcommand and writes the JSON report to `out`
/// (or to --report). Returns the exit status.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Backward stochastic difference equations on finite scenario trees"};
    app.require_subcommand(1);
    Common c;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--tree", c.tree, "tree document")->required();
        sub->add_option("--report", c.report, "write the report here instead of stdout");
        sub->add_option("--tolerance", c.tolerance, "numeric tolerance override");
        sub->add_option("--probe-grid", c.probe_grid, "points on the y probe grid (0 disables probing)");
    };
    auto* solve_cmd = app.add_subcommand("solve", "solve the equation backward from a terminal condition");
    add_common(solve_cmd);
    solve_cmd->add_option("--driver", c.driver)->required();
    solve_cmd->add_option("--terminal", c.terminal)->required();
    solve_cmd->add_option("--time", c.time, "first time to solve down to");

    auto* compare_cmd = app.add_subcommand("compare", "check the comparison hypotheses for two problems");
    add_common(compare_cmd);
    compare_cmd->add_option("--problem1", c.problem1)->required();
    compare_cmd->add_option("--problem2", c.problem2)->required();
    compare_cmd->add_option("--mode", c.mode, "standard, alternate, or a comma list with one per time");

    auto* nlexp_cmd = app.add_subcommand("nlexp", "evaluate the driver-backed nonlinear expectation");
    add_common(nlexp_cmd);
    nlexp_cmd->add_option("--driver", c.driver)->required();
    nlexp_cmd->add_option("--terminal", c.terminal)->required();
    nlexp_cmd->add_option("--time", c.time);
    nlexp_cmd->add_option("--family", c.family, "terminal conditions used for the balancedness probe");
    nlexp_cmd->add_flag("--risk", c.risk, "report the risk measure -E(Q | F_t)");

    auto* recover_cmd = app.add_subcommand("recover", "recover a driver from solver-generated oracles");
    add_common(recover_cmd);
    recover_cmd->add_option("--driver", c.driver)->required();
    recover_cmd->add_option("--time", c.time);
    recover_cmd->add_option("--probes", c.probes);

    auto* extend_cmd = app.add_subcommand("extend-static", "extend a static map to a dynamic family");
    add_common(extend_cmd);
    extend_cmd->add_option("--static", c.static_map)->required();
    extend_cmd->add_option("--terminal", c.terminal)->required();

    auto* probe_cmd = app.add_subcommand("probe", "probe the driver assumptions on a grid");
    add_common(probe_cmd);
    probe_cmd->add_option("--driver", c.driver)->required();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return Ok;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return Usage;
    }

    CLI::App* sub = app.get_subcommands().front();
    ojson rep;
    rep["schema_version"] = io::schema_version;
    rep["command"] = sub->get_name();
    rep["arguments"] = args;
    int status = Ok;
    try {
        if (sub == solve_cmd) status = cmd_solve(c, rep);
        else if (sub == compare_cmd) status = cmd_compare(c, rep);
        else if (sub == nlexp_cmd) status = cmd_nlexp(c, rep);
        else if (sub == recover_cmd) status = cmd_recover(c, rep);
        else if (sub == extend_cmd) status = cmd_extend_static(c, rep);
        else status = cmd_probe(c, rep);
    } catch (const Error& e) {
        const bool parse = e.code() == ErrorCode::ParseError;
        err << "error: " << e.what() << "\n";
        rep["error"] = e.what();
        status = parse ? Parse : SolveFailure;
    }
    rep["exit_status"] = status;

    const std::string text = rep.dump(2) + "\n";
    if (c.report.empty()) {
        out << text;
    } else {
        std::ofstream f(c.report, std::ios::binary);
        if (!f) {
            err << "error: cannot write report to " << c.report << "\n";
            return SolveFailure;
        }
        f << text;
    }
    return status;
}

}  // namespace bsde::cli
