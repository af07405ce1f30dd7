#include "pmdpsyn/synthesis.hpp"

#include "pmdpsyn/errors.hpp"
#include "pmdpsyn/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <random>

namespace pmdpsyn {

const char* to_string(OutcomeStatus s) { return s == OutcomeStatus::Feasible ? "Feasible" : "NotFound"; }

const char* to_string(NotFoundReason r) {
    switch (r) {
        case NotFoundReason::None: return "None";
        case NotFoundReason::Converged: return "Converged";
        case NotFoundReason::TrustRegionCollapsed: return "TrustRegionCollapsed";
        case NotFoundReason::IterationCap: return "IterationCap";
        case NotFoundReason::Infeasible: return "Infeasible";
        case NotFoundReason::TimeLimit: return "TimeLimit";
    }
    return "?";
}

std::optional<CheckResult> certify(const ParametricMDP& model, const Specification& spec,
                                   const std::vector<double>& params, double eps, CheckMethod method) {
    if (params.size() != model.num_parameters()) return std::nullopt;
    auto val = Valuation::from_dense(params);
    if (!check_graph_preserving(model, val, eps)) return std::nullopt;
    Mdp mdp;
    try {
        mdp = instantiate(model, val);
    } catch (const NotWellDefined&) {
        return std::nullopt;
    }
    auto res = check_spec(mdp, spec, method);
    if (!res.satisfied) return std::nullopt;
    return res;
}

double next_tau(double tau, double mu, double tau_max) { return std::min(tau + mu, tau_max); }

double next_delta(double delta, bool accepted, double gamma, double delta_max) {
    return accepted ? std::min(delta * gamma, delta_max) : delta / gamma;
}

double next_beta(double beta, bool accepted, double step) { return accepted ? beta : beta + step; }

bool improves(const Specification& spec, double value, double best) {
    if (std::isnan(value)) return false;
    return spec.upper_bound() ? value < best - 1e-12 : value > best + 1e-12;
}

SolverSettings subproblem_settings(SolverMethod method, std::size_t max_iter) {
    SolverSettings s;
    s.method = method;
    s.eps_abs = s.eps_rel = method == SolverMethod::Admm ? 1e-7 : 1e-9;
    s.max_iter = max_iter;
    return s;
}

namespace {

using Clock = std::chrono::steady_clock;

class Run {
   public:
    Run(const ParametricMDP& model, const Specification& spec, double eps, double time_limit, const char* method)
        : model_(model), spec_(spec), eps_(eps), time_limit_(time_limit), start_(Clock::now()), inst_(model) {
        out.method = method;
    }

    /// Builds the encoding; returns false when the outcome is already decided.
    bool prepare() {
        try {
            q = build_qcqp(model_, spec_, eps_);
        } catch (const InfeasibleTrivially&) {
            return finish(NotFoundReason::Infeasible);
        }
        if (q.initial_var == std::numeric_limits<std::size_t>::max() || q.num_probs == 0) {
            auto v = interior_point(q, eps_ * 1.01 + 1e-9);
            check(v);
            if (!accept_if_certified(v)) finish(NotFoundReason::Infeasible);
            out.valuation = v;
            return false;
        }
        return true;
    }

    CheckResult check(const std::vector<double>& v) {
        ++mc_calls;
        if (!inst_.assign(v).empty()) {
            CheckResult bad;
            bad.at_initial = std::numeric_limits<double>::quiet_NaN();
            return bad;
        }
        return check_spec(inst_.mdp(), spec_);
    }

    bool accept_if_certified(const std::vector<double>& v) {
        auto c = certify(model_, spec_, v, eps_);
        if (!c) return false;
        out.status = OutcomeStatus::Feasible;
        out.reason = NotFoundReason::None;
        out.valuation = v;
        out.certificate = std::move(c);
        stamp();
        return true;
    }

    bool finish(NotFoundReason r) {
        out.status = OutcomeStatus::NotFound;
        out.reason = r;
        stamp();
        return false;
    }

    bool out_of_time() const { return time_limit_ > 0 && elapsed() > time_limit_; }
    double elapsed() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }

    std::vector<double> params_of(const std::vector<double>& x) { return repaired(split_solution(q, x).params); }
    std::vector<double> repaired(const std::vector<double>& params) {
        auto r = repair_params(q, params);
        return r ? *r : interior_point(q, eps_ * 1.01 + 1e-9);
    }

    const Specification& spec() const { return spec_; }
    double eps() const { return eps_; }

    QcqpEncoding q;
    SynthesisOutcome out;
    std::size_t mc_calls = 0;

   private:
    void stamp() {
        out.wall_time = elapsed();
        out.iterations = out.trace.size();
    }

    const ParametricMDP& model_;
    const Specification& spec_;
    double eps_;
    double time_limit_;
    Clock::time_point start_;
    Instantiator inst_;
};

double mc_value(const CheckResult& r) { return r.initial_infinite ? kInf : r.at_initial; }

std::vector<double> clamp_all(std::size_t n, double value, double hi) {
    return std::vector<double>(n, std::clamp(value, 0.0, hi));
}

std::vector<double> random_params(const QcqpEncoding& q, std::mt19937_64& rng, double eps) {
    std::vector<double> v(q.num_params);
    for (ParamId i = 0; i < q.num_params; ++i) {
        double lo = std::isfinite(q.param_lower[i]) ? q.param_lower[i] : eps;
        double hi = std::isfinite(q.param_upper[i]) ? q.param_upper[i] : 1.0 - eps;
        v[i] = std::uniform_real_distribution<double>(lo, hi)(rng);
    }
    auto r = repair_params(q, v);
    return r ? *r : interior_point(q, eps * 1.01 + 1e-9);
}

double max_change(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

SynthesisOutcome run_ccp(const ParametricMDP& model, const Specification& spec, const CcpConfig& config,
                         std::uint64_t seed) {
    Run run(model, spec, config.eps_graph, config.time_limit, "ccp");
    if (!run.prepare()) return run.out;
    const QcqpEncoding& q = run.q;
    std::mt19937_64 rng(seed);

    double tau0 = config.tau0.value_or(spec.kind == SpecKind::ReachProbability ? 0.05 : 5.0);
    double tau = tau0;
    Anchor anchor{interior_point(q, config.eps_graph * 1.01 + 1e-9), clamp_all(q.num_probs, spec.threshold, q.prob_upper)};
    ApproxSettings settings{Approximation::Ccp, tau, 0.0};
    ConvexProblem problem = build_approximation(q, anchor, settings);
    auto solver = subproblem_settings(config.solver, config.solver_max_iter);
    std::optional<WarmStart> warm;
    std::size_t stalls = 0;

    for (std::size_t it = 0; it < config.max_iters; ++it) {
        if (run.out_of_time()) return run.finish(NotFoundReason::TimeLimit), run.out;
        settings.tau = tau;
        if (it > 0) update_anchor(problem, q, anchor, settings);
        auto rep = solve(problem, solver, warm ? &*warm : nullptr);

        IterationRecord rec;
        rec.index = it;
        rec.anchor = anchor;
        rec.tau = tau;
        rec.delta = std::numeric_limits<double>::quiet_NaN();
        if (rep.status == SolveStatus::PrimalInfeasible) {
            rec.solver_objective = rec.penalty_sum = rec.mc_value = std::numeric_limits<double>::quiet_NaN();
            run.out.trace.push_back(rec);
            run.out.valuation = anchor.params;
            return run.finish(NotFoundReason::Infeasible), run.out;
        }
        warm = rep.warm_start();
        auto v = run.params_of(rep.x);
        double penalty = split_solution(q, rep.x).penalty_sum();
        auto res = run.check(v);
        rec.params = v;
        rec.solver_objective = rep.objective;
        rec.penalty_sum = penalty;
        rec.mc_value = mc_value(res);
        rec.accepted = true;
        run.out.valuation = v;

        Anchor next{v, std::isnan(res.at_initial) ? anchor.probs : probs_from_states(q, res.per_state)};
        double mu = 0.0;
        for (double p : next.probs) mu = std::max(mu, p);
        rec.mu = mu;
        run.out.trace.push_back(rec);

        if (res.satisfied && run.accept_if_certified(v)) return run.out;

        stalls = max_change(v, anchor.params) <= 1e-7 ? stalls + 1 : 0;
        anchor = std::move(next);
        tau = next_tau(tau, mu, config.tau_max);
        if (stalls >= 5) {
            if (run.out.restarts >= config.restart_limit) return run.finish(NotFoundReason::Converged), run.out;
            ++run.out.restarts;
            stalls = 0;
            anchor.params = random_params(q, rng, config.eps_graph);
            auto r = run.check(anchor.params);
            if (!std::isnan(r.at_initial)) anchor.probs = probs_from_states(q, r.per_state);
            warm.reset();
        }
    }
    run.finish(NotFoundReason::IterationCap);
    return run.out;
}

SynthesisOutcome run_scp(const ParametricMDP& model, const Specification& spec, const ScpConfig& config,
                         std::uint64_t) {
    Run run(model, spec, config.eps_graph, config.time_limit, "scp");
    if (!run.prepare()) return run.out;
    const QcqpEncoding& q = run.q;

    Anchor anchor;
    anchor.params = interior_point(q, config.eps_graph * 1.01 + 1e-9);
    auto first = run.check(anchor.params);
    anchor.probs = probs_from_states(q, first.per_state);
    double best = spec.upper_bound() ? 1e30 : 0.0;
    double delta = config.delta0;

    ApproxSettings settings{Approximation::Scp, config.tau, delta};
    ConvexProblem problem = build_approximation(q, anchor, settings);
    auto solver = subproblem_settings(config.solver, config.solver_max_iter);
    std::optional<WarmStart> warm;
    run.out.valuation = anchor.params;

    for (std::size_t it = 0; it < config.max_iters; ++it) {
        if (run.out_of_time()) return run.finish(NotFoundReason::TimeLimit), run.out;
        settings.delta = delta;
        if (it > 0) update_anchor(problem, q, anchor, settings);
        auto rep = solve(problem, solver, warm ? &*warm : nullptr);

        IterationRecord rec;
        rec.index = it;
        rec.anchor = anchor;
        rec.delta = delta;
        rec.tau = config.tau;
        rec.solver_objective = rep.objective;
        bool accepted = false;
        if (rep.status == SolveStatus::PrimalInfeasible) {
            rec.penalty_sum = rec.mc_value = std::numeric_limits<double>::quiet_NaN();
        } else {
            warm = rep.warm_start();
            auto v = run.params_of(rep.x);
            auto res = run.check(v);
            rec.params = v;
            rec.penalty_sum = split_solution(q, rep.x).penalty_sum();
            rec.mc_value = mc_value(res);
            if (res.satisfied && run.accept_if_certified(v)) {
                rec.accepted = true;
                run.out.trace.push_back(rec);
                run.out.iterations = run.out.trace.size();
                return run.out;
            }
            if (improves(spec, rec.mc_value, best)) {
                accepted = true;
                best = rec.mc_value;
                anchor = {v, probs_from_states(q, res.per_state)};
                run.out.valuation = v;
            }
        }
        rec.accepted = accepted;
        run.out.trace.push_back(rec);
        delta = next_delta(delta, accepted, config.gamma, config.delta_max);
        if (delta < config.omega) return run.finish(NotFoundReason::TrustRegionCollapsed), run.out;
    }
    run.finish(NotFoundReason::IterationCap);
    return run.out;
}

SynthesisOutcome run_scp_regularized(const ParametricMDP& model, const Specification& spec,
                                     const RegularizedScpConfig& config, std::uint64_t) {
    Run run(model, spec, config.eps_graph, config.time_limit, "scp-reg");
    if (!run.prepare()) return run.out;
    const QcqpEncoding& q = run.q;
    const double sigma = q.sense();

    double lipschitz = 0.0;
    for (const auto& t : q.terms) lipschitz = std::max(lipschitz, 2.0 * std::abs(t.coeff));
    double mu_prime = config.mu_reg_prime.value_or(lipschitz);

    std::vector<double> params = config.initial ? *config.initial : interior_point(q, config.eps_graph * 1.01 + 1e-9);
    if (auto r = repair_params(q, params)) params = *r;
    auto res0 = run.check(params);
    std::vector<double> x = params;
    auto probs0 = probs_from_states(q, res0.per_state);
    x.insert(x.end(), probs0.begin(), probs0.end());
    run.out.valuation = params;
    double beta = config.beta0;
    const std::size_t n = q.num_params + q.num_probs;
    const std::size_t kcol = n;
    auto solver = subproblem_settings(config.solver, config.solver_max_iter);
    solver.eps_abs = solver.eps_rel = 1e-9;

    for (std::size_t it = 0; it < config.max_iters; ++it) {
        if (run.out_of_time()) return run.finish(NotFoundReason::TimeLimit), run.out;
        double w = 0.5 * (config.mu_reg + beta * mu_prime);
        ConvexProblem p;
        for (ParamId i = 0; i < q.num_params; ++i) p.add_var(q.param_lower[i], q.param_upper[i]);
        for (std::size_t j = 0; j < q.num_probs; ++j) p.add_var(0.0, q.prob_upper, j == q.initial_var ? sigma : 0.0);
        p.add_var(0.0, kInf, beta);
        for (std::size_t i = 0; i < n; ++i) {
            // w * (x_i - x_l)^2
            p.objective_atoms.push_back({w, i, -1, 1.0});
            p.q[i] -= 2.0 * w * x[i];
            p.objective_constant += w * x[i] * x[i];
        }
        for (const auto& row : q.rows) {
            std::map<std::size_t, double> coef;
            double hi = -sigma * row.constant;
            for (const auto& [col, c] : row.linear) coef[col] += sigma * c;
            coef[q.prob_col(row.prob_var)] -= sigma;
            for (std::size_t ti : row.terms) {
                const BilinearTerm& t = q.terms[ti];
                double e = sigma * t.coeff;
                std::size_t yc = q.param_col(t.param_var), zc = q.prob_col(t.prob_var);
                coef[zc] += sigma * t.affine_part + e * x[yc];
                coef[yc] += e * x[zc];
                hi += e * x[yc] * x[zc];
            }
            std::size_t r = p.add_row(-kInf, hi);
            for (const auto& [col, c] : coef) p.add_entry(r, col, c);
            p.add_entry(r, kcol, -1.0);
        }
        if (!q.box_region)
            for (const auto& t : q.transitions) {
                std::size_t r = p.add_row(q.eps - t.constant, kInf);
                for (const auto& [pi, c] : t.coeffs) p.add_entry(r, q.param_col(pi), c);
            }
        auto rep = solve(p, solver);

        IterationRecord rec;
        rec.index = it;
        rec.anchor = {std::vector<double>(x.begin(), x.begin() + q.num_params),
                      std::vector<double>(x.begin() + q.num_params, x.end())};
        rec.tau = beta;
        rec.delta = std::numeric_limits<double>::quiet_NaN();
        rec.solver_objective = rep.objective;
        bool accepted = rep.status != SolveStatus::PrimalInfeasible && rep.x[kcol] <= 1e-8;
        rec.penalty_sum = rep.status == SolveStatus::PrimalInfeasible ? std::numeric_limits<double>::quiet_NaN()
                                                                      : rep.x[kcol];
        rec.mc_value = std::numeric_limits<double>::quiet_NaN();
        rec.accepted = accepted;
        if (!accepted) {
            run.out.trace.push_back(rec);
            beta = next_beta(beta, false, config.delta_step);
            continue;
        }
        std::vector<double> nx(rep.x.begin(), rep.x.begin() + static_cast<std::ptrdiff_t>(n));
        auto v = run.repaired(std::vector<double>(rep.x.begin(), rep.x.begin() + static_cast<std::ptrdiff_t>(q.num_params)));
        std::copy(v.begin(), v.end(), nx.begin());
        double step = max_change(nx, x);
        // a vanishing step leaves the anchor as the fixed point
        if (step < config.step_tol) v = rec.anchor.params;
        else x = std::move(nx);
        auto res = run.check(v);
        rec.params = v;
        rec.mc_value = mc_value(res);
        run.out.trace.push_back(rec);
        run.out.valuation = v;
        if (res.satisfied && run.accept_if_certified(v)) return run.out;
        if (step < config.step_tol) return run.finish(NotFoundReason::Converged), run.out;
    }
    run.finish(NotFoundReason::IterationCap);
    return run.out;
}

SynthesisOutcome run_pso(const ParametricMDP& model, const Specification& spec, const PsoConfig& config,
                         std::uint64_t seed) {
    Run run(model, spec, config.eps_graph, config.time_limit, "pso");
    if (!rectangular_region(model, config.eps_graph))
        throw NonRectangularRegion("particle swarm needs a rectangular parameter region");
    if (!run.prepare()) return run.out;
    const QcqpEncoding& q = run.q;
    const std::size_t n = q.num_params;
    const double sigma = q.sense();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto score = [&](const CheckResult& r) {
        double v = mc_value(r);
        return std::isnan(v) ? kInf : sigma * v;
    };

    std::size_t m = std::max<std::size_t>(config.particles, 1);
    std::vector<std::vector<double>> pos(m, std::vector<double>(n)), vel = pos, best_pos;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t d = 0; d < n; ++d) {
            double range = q.param_upper[d] - q.param_lower[d];
            pos[i][d] = q.param_lower[d] + unit(rng) * range;
            vel[i][d] = (2.0 * unit(rng) - 1.0) * 0.2 * range;
        }
    best_pos = pos;
    std::vector<double> best_score(m, kInf);
    std::vector<double> global(n);
    double global_score = kInf, global_value = std::numeric_limits<double>::quiet_NaN();
    if (n > 0) global = pos[0];

    for (std::size_t it = 0; it < config.max_iters; ++it) {
        if (run.out_of_time()) return run.finish(NotFoundReason::TimeLimit), run.out;
        bool improved = false;
        std::size_t feasible_particle = m;
        for (std::size_t i = 0; i < m; ++i) {
            auto res = run.check(pos[i]);
            double s = score(res);
            if (s < best_score[i]) {
                best_score[i] = s;
                best_pos[i] = pos[i];
            }
            if (s < global_score) {
                global_score = s;
                global = pos[i];
                global_value = mc_value(res);
                improved = true;
            }
            if (res.satisfied && feasible_particle == m) feasible_particle = i;
        }
        IterationRecord rec;
        rec.index = it;
        rec.anchor.params = global;
        rec.params = global;
        rec.solver_objective = global_score;
        rec.mc_value = global_value;
        rec.penalty_sum = std::numeric_limits<double>::quiet_NaN();
        rec.delta = std::numeric_limits<double>::quiet_NaN();
        rec.tau = std::numeric_limits<double>::quiet_NaN();
        rec.accepted = improved;
        run.out.trace.push_back(rec);
        run.out.valuation = global;
        if (feasible_particle < m && run.accept_if_certified(pos[feasible_particle])) return run.out;
        if (n == 0) return run.finish(NotFoundReason::Infeasible), run.out;

        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t d = 0; d < n; ++d) {
                double r1 = unit(rng), r2 = unit(rng);
                vel[i][d] = config.inertia * vel[i][d] + config.cognitive * r1 * (best_pos[i][d] - pos[i][d]) +
                            config.social * r2 * (global[d] - pos[i][d]);
                pos[i][d] += vel[i][d];
                if (pos[i][d] < q.param_lower[d] || pos[i][d] > q.param_upper[d]) {
                    pos[i][d] = std::clamp(pos[i][d], q.param_lower[d], q.param_upper[d]);
                    vel[i][d] = 0.0;
                }
            }
    }
    run.finish(NotFoundReason::IterationCap);
    return run.out;
}

}  // namespace pmdpsyn
