#include "pmdpsyn/cli.hpp"

#include "pmdpsyn/errors.hpp"
#include "pmdpsyn/io.hpp"
#include "pmdpsyn/modelcheck.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <ostream>
#include <stdexcept>

namespace pmdpsyn {

using nlohmann::json;

const char* to_string(Method m) {
    switch (m) {
        case Method::Ccp: return "ccp";
        case Method::Scp: return "scp";
        case Method::ScpRegularized: return "scp-reg";
        case Method::Pso: return "pso";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    for (Method m : {Method::Ccp, Method::Scp, Method::ScpRegularized, Method::Pso})
        if (name == to_string(m)) return m;
    throw std::invalid_argument("unknown method '" + name + "'");
}

std::string csv_field(const std::string& text) {
    if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
    std::string q = "\"";
    for (char c : text) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + '"';
}

namespace {

std::string number(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string trace_csv(const SynthesisOutcome& outcome) {
    std::string s = "iter,objective,mc_value,penalty_sum,delta,tau,accepted\r\n";
    for (const auto& r : outcome.trace) {
        const std::string cells[] = {std::to_string(r.index), number(r.solver_objective), number(r.mc_value),
                                     number(r.penalty_sum), number(r.delta), number(r.tau),
                                     r.accepted ? "1" : "0"};
        for (std::size_t i = 0; i < std::size(cells); ++i) {
            if (i) s += ',';
            s += csv_field(cells[i]);
        }
        s += "\r\n";
    }
    return s;
}

namespace {

struct Configured {
    json echo;
    std::size_t solver_max_iter = 0;
};

SynthesisOutcome dispatch(const ParametricMDP& model, const Specification& spec, const RunOptions& o, Configured& c) {
    double limit = o.time_limit.value_or(0.0);
    switch (o.method) {
        case Method::Ccp: {
            CcpConfig cfg;
            cfg.eps_graph = o.eps_graph;
            cfg.solver = o.solver;
            cfg.time_limit = limit;
            if (o.tau0) cfg.tau0 = *o.tau0;
            if (o.tau_max) cfg.tau_max = *o.tau_max;
            if (o.max_iters) cfg.max_iters = *o.max_iters;
            double tau0 = cfg.tau0.value_or(spec.kind == SpecKind::ReachProbability ? 0.05 : 5.0);
            c.echo = {{"tau0", tau0}, {"tau_max", cfg.tau_max}, {"max_iters", cfg.max_iters},
                      {"restart_limit", cfg.restart_limit}, {"penalty_zero_tol", cfg.penalty_zero_tol}};
            c.solver_max_iter = cfg.solver_max_iter;
            return run_ccp(model, spec, cfg, o.seed);
        }
        case Method::Scp: {
            ScpConfig cfg;
            cfg.eps_graph = o.eps_graph;
            cfg.solver = o.solver;
            cfg.time_limit = limit;
            if (o.delta0) cfg.delta0 = *o.delta0;
            if (o.gamma) cfg.gamma = *o.gamma;
            if (o.omega) cfg.omega = *o.omega;
            if (o.max_iters) cfg.max_iters = *o.max_iters;
            c.echo = {{"tau", cfg.tau},     {"delta0", cfg.delta0},       {"gamma", cfg.gamma},
                      {"omega", cfg.omega}, {"delta_max", cfg.delta_max}, {"max_iters", cfg.max_iters}};
            c.solver_max_iter = cfg.solver_max_iter;
            return run_scp(model, spec, cfg, o.seed);
        }
        case Method::ScpRegularized: {
            RegularizedScpConfig cfg;
            cfg.eps_graph = o.eps_graph;
            cfg.solver = o.solver;
            cfg.time_limit = limit;
            if (o.max_iters) cfg.max_iters = *o.max_iters;
            c.echo = {{"beta0", cfg.beta0},
                      {"delta_step", cfg.delta_step},
                      {"mu_reg", cfg.mu_reg},
                      {"mu_reg_prime", cfg.mu_reg_prime ? json(*cfg.mu_reg_prime) : json("auto")},
                      {"step_tol", cfg.step_tol},
                      {"max_iters", cfg.max_iters}};
            c.solver_max_iter = cfg.solver_max_iter;
            return run_scp_regularized(model, spec, cfg, o.seed);
        }
        case Method::Pso: {
            PsoConfig cfg;
            cfg.eps_graph = o.eps_graph;
            cfg.time_limit = limit;
            if (o.max_iters) cfg.max_iters = *o.max_iters;
            c.echo = {{"particles", cfg.particles}, {"inertia", cfg.inertia}, {"cognitive", cfg.cognitive},
                      {"social", cfg.social},       {"max_iters", cfg.max_iters}};
            return run_pso(model, spec, cfg, o.seed);
        }
    }
    throw std::invalid_argument("unknown method");
}

struct Recheck {
    bool graph_preserving = false;
    std::optional<CheckResult> vi;
    std::optional<CheckResult> lp;
};

Recheck recheck(const ParametricMDP& model, const Specification& spec, const std::vector<double>& params,
                double eps, bool with_lp) {
    Recheck r;
    if (params.size() != model.num_parameters()) return r;
    auto val = Valuation::from_dense(params);
    r.graph_preserving = static_cast<bool>(check_graph_preserving(model, val, eps));
    Mdp mdp;
    try {
        mdp = instantiate(model, val);
    } catch (const NotWellDefined&) {
        return r;
    }
    r.vi = check_spec(mdp, spec, CheckMethod::ValueIteration);
    if (with_lp) r.lp = check_spec(mdp, spec, CheckMethod::LinearProgram);
    return r;
}

json check_json(const CheckResult& c) {
    return {{"value", c.initial_infinite ? json(nullptr) : number_or_null(c.at_initial)},
            {"infinite", c.initial_infinite},
            {"satisfied", c.satisfied}};
}

}  // namespace

RunArtifacts run_synthesis(const ParametricMDP& model, const Specification& spec, const RunOptions& o) {
    Configured conf;
    RunArtifacts art;
    art.outcome = dispatch(model, spec, o, conf);
    const SynthesisOutcome& out = art.outcome;

    json doc;
    doc["tool"] = kToolName;
    doc["version"] = kToolVersion;
    doc["model"] = {{"path", o.model_path},
                    {"states", model.num_states},
                    {"parameters", model.num_parameters()},
                    {"transitions", model.num_transitions()},
                    {"pmc", model.is_pmc()}};
    doc["spec"] = spec.to_string();
    doc["spec_input"] = o.spec;
    doc["method"] = to_string(o.method);
    doc["seed"] = o.seed;
    doc["status"] = to_string(out.status);
    doc["reason"] = to_string(out.reason);
    json val = json::object();
    for (std::size_t i = 0; i < out.valuation.size() && i < model.parameters.size(); ++i)
        val[model.parameters[i]] = out.valuation[i];
    doc["valuation"] = val;
    doc["iterations"] = out.iterations;
    doc["restarts"] = out.restarts;
    doc["wall_time_s"] = out.wall_time;
    doc["config"] = conf.echo;

    Recheck rc = recheck(model, spec, out.valuation, o.eps_graph, o.oracle_check);
    json cert = {{"method", "value_iteration"}, {"graph_preserving", rc.graph_preserving}};
    if (rc.vi) {
        cert.update(check_json(*rc.vi));
        cert["satisfied"] = rc.vi->satisfied && rc.graph_preserving;
    } else {
        cert.update({{"value", nullptr}, {"infinite", false}, {"satisfied", false}});
    }
    doc["certification"] = cert;

    CheckOptions mc;
    json tol = {{"eps_graph", o.eps_graph},
                {"threshold_slack", 1e-9},
                {"mc_precision", mc.precision},
                {"mc_residual", mc.residual_tolerance}};
    if (o.method != Method::Pso) {
        SolverSettings st = subproblem_settings(o.solver, conf.solver_max_iter);
        tol["solver"] = to_string(o.solver);
        tol["solver_eps"] = o.method == Method::ScpRegularized ? 1e-9 : st.eps_abs;
        if (o.solver == SolverMethod::Admm) tol["solver_max_iter"] = st.max_iter;
    }
    doc["tolerances"] = tol;

    if (o.oracle_check) {
        json oc = {{"vi", nullptr}, {"lp", nullptr}, {"agree", rc.vi.has_value() == rc.lp.has_value()}};
        if (rc.vi && rc.lp) {
            oc["vi"] = check_json(*rc.vi)["value"];
            oc["lp"] = check_json(*rc.lp)["value"];
            bool both_inf = rc.vi->initial_infinite && rc.lp->initial_infinite;
            bool close = !rc.vi->initial_infinite && !rc.lp->initial_infinite &&
                         std::abs(rc.vi->at_initial - rc.lp->at_initial) <= 1e-6;
            oc["agree"] = both_inf || close;
        }
        art.oracle_agrees = oc["agree"].get<bool>();
        doc["oracle_check"] = oc;
    }

    art.result = doc.dump(2) + "\n";
    art.trace = trace_csv(out);
    return art;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
    if (!f) throw Error("cannot write " + path.string());
}

int exit_code(const RunArtifacts& a) {
    if (!a.oracle_agrees) return 1;
    return a.outcome.feasible() ? 0 : 2;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Parameter synthesis for parametric MDPs", kToolName};
    RunOptions o;
    std::string method = "ccp", solver = "interior-point", out_dir;
    bool trace = false;
    std::size_t seeds = 1;
    app.add_option("--model", o.model_path, "model file")->required();
    app.add_option("--spec", o.spec, "specification, e.g. \"P<=0.1 [F target]\"")->required();
    app.add_option("--method", method, "ccp, scp, scp-reg or pso")
        ->check(CLI::IsMember({"ccp", "scp", "scp-reg", "pso"}));
    app.add_option("--eps-graph", o.eps_graph, "graph-preservation margin")->check(CLI::PositiveNumber);
    app.add_option("--seed", o.seed, "random seed");
    app.add_option("--max-iters", o.max_iters, "iteration cap");
    app.add_option("--tau0", o.tau0, "initial CCP penalty weight");
    app.add_option("--tau-max", o.tau_max, "CCP penalty weight cap");
    app.add_option("--delta0", o.delta0, "initial SCP trust region");
    app.add_option("--gamma", o.gamma, "SCP trust region factor");
    app.add_option("--omega", o.omega, "SCP trust region floor");
    app.add_option("--time-limit", o.time_limit, "wall-clock budget in seconds");
    app.add_option("--solver", solver, "interior-point or admm")->check(CLI::IsMember({"interior-point", "admm"}));
    app.add_option("--out", out_dir, "directory for result.json and trace.csv");
    app.add_flag("--trace", trace, "write trace.csv");
    app.add_flag("--oracle-check", o.oracle_check, "cross-check the final answer by value iteration and LP");
    app.add_option("--seeds", seeds, "run this many consecutive seeds concurrently")->check(CLI::PositiveNumber);

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        o.method = parse_method(method);
        o.solver = solver == "admm" ? SolverMethod::Admm : SolverMethod::InteriorPoint;
        auto model = parse_model(read_file(o.model_path));
        auto diags = validate_model(model, o.eps_graph);
        for (const auto& d : diags)
            err << (d.severity == Severity::Error ? "error: " : "warning: ") << d.message << "\n";
        if (has_errors(diags)) return 1;
        auto spec = parse_spec(o.spec, model);
        std::filesystem::path dir = out_dir.empty() ? std::filesystem::path(".") : std::filesystem::path(out_dir);
        if (!out_dir.empty()) std::filesystem::create_directories(dir);

        if (seeds == 1) {
            auto art = run_synthesis(model, spec, o);
            out << art.result;
            if (!out_dir.empty()) write_file(dir / "result.json", art.result);
            if (trace) write_file(dir / "trace.csv", art.trace);
            if (!art.oracle_agrees) err << "error: value iteration and LP disagree on the final valuation\n";
            return exit_code(art);
        }

        std::vector<std::future<RunArtifacts>> runs;
        for (std::size_t k = 0; k < seeds; ++k) {
            RunOptions ok = o;
            ok.seed = o.seed + k;
            runs.push_back(std::async(std::launch::async, [&model, &spec, ok] { return run_synthesis(model, spec, ok); }));
        }
        json summary = {{"tool", kToolName}, {"version", kToolVersion}, {"spec", spec.to_string()},
                        {"method", to_string(o.method)}, {"model", o.model_path}};
        json rows = json::array();
        std::size_t feasible = 0;
        bool agree = true;
        for (std::size_t k = 0; k < seeds; ++k) {
            auto art = runs[k].get();
            auto doc = json::parse(art.result);
            if (!out_dir.empty()) {
                auto sub = dir / ("seed-" + std::to_string(o.seed + k));
                std::filesystem::create_directories(sub);
                write_file(sub / "result.json", art.result);
                if (trace) write_file(sub / "trace.csv", art.trace);
            }
            feasible += art.outcome.feasible();
            agree = agree && art.oracle_agrees;
            rows.push_back({{"seed", doc["seed"]},
                            {"status", doc["status"]},
                            {"reason", doc["reason"]},
                            {"iterations", doc["iterations"]},
                            {"wall_time_s", doc["wall_time_s"]},
                            {"certified_value", doc["certification"]["value"]}});
        }
        summary["runs"] = rows;
        summary["feasible_runs"] = feasible;
        summary["total_runs"] = seeds;
        std::string text = summary.dump(2) + "\n";
        out << text;
        if (!out_dir.empty()) write_file(dir / "summary.json", text);
        if (!agree) {
            err << "error: value iteration and LP disagree on a final valuation\n";
            return 1;
        }
        return feasible > 0 ? 0 : 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace pmdpsyn
