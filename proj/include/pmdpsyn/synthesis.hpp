#pragma once

#include "pmdpsyn/encoding.hpp"
#include "pmdpsyn/model.hpp"
#include "pmdpsyn/modelcheck.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pmdpsyn {

struct CcpConfig {
    std::optional<double> tau0;  // 0.05 for reachability, 5 for expected cost
    double tau_max = 1e4;
    std::size_t max_iters = 500;
    std::size_t restart_limit = 5;
    double penalty_zero_tol = 1e-9;
    double eps_graph = 1e-6;
    SolverMethod solver = SolverMethod::InteriorPoint;
    std::size_t solver_max_iter = 4000;  // ADMM iterations per subproblem; the last iterate is used when it runs out
    double time_limit = 0.0;  // seconds, 0 = none
};

struct ScpConfig {
    double tau = 1e4;
    double delta0 = 2.0;
    double gamma = 1.5;
    double omega = 1e-4;
    double delta_max = 1e6;
    std::size_t max_iters = 500;
    double eps_graph = 1e-6;
    SolverMethod solver = SolverMethod::InteriorPoint;
    std::size_t solver_max_iter = 4000;  // ADMM iterations per subproblem; the last iterate is used when it runs out
    double time_limit = 0.0;
};

struct RegularizedScpConfig {
    double beta0 = 1.0;
    double delta_step = 1.0;
    double mu_reg = 1e-3;
    std::optional<double> mu_reg_prime;  // default 2 * max |coeff| over bilinear terms
    double step_tol = 1e-8;
    std::size_t max_iters = 500;
    double eps_graph = 1e-6;
    SolverMethod solver = SolverMethod::InteriorPoint;
    std::size_t solver_max_iter = 4000;  // ADMM iterations per subproblem; the last iterate is used when it runs out
    double time_limit = 0.0;
    std::optional<std::vector<double>> initial;  // starting parameters; box center otherwise
};

struct PsoConfig {
    std::size_t particles = 40;
    double inertia = 0.72;
    double cognitive = 1.49;
    double social = 1.49;
    std::size_t max_iters = 1000;
    double eps_graph = 1e-6;
    double time_limit = 0.0;
};

struct IterationRecord {
    std::size_t index = 0;
    Anchor anchor;
    std::vector<double> params;  // valuation extracted in this iteration
    double solver_objective = 0.0;
    double penalty_sum = 0.0;
    double mc_value = 0.0;
    bool accepted = false;
    double delta = 0.0;  // SCP only
    double tau = 0.0;    // penalty weight; beta for regularized SCP
    double mu = 0.0;     // CCP only
};

enum class OutcomeStatus { Feasible, NotFound };
enum class NotFoundReason { None, Converged, TrustRegionCollapsed, IterationCap, Infeasible, TimeLimit };

const char* to_string(OutcomeStatus s);
const char* to_string(NotFoundReason r);

struct SynthesisOutcome {
    std::string method;
    OutcomeStatus status = OutcomeStatus::NotFound;
    NotFoundReason reason = NotFoundReason::None;
    std::vector<double> valuation;            // last iterate when NotFound
    std::optional<CheckResult> certificate;   // regenerated by certify() on Feasible
    std::vector<IterationRecord> trace;
    double wall_time = 0.0;
    std::size_t iterations = 0;
    std::size_t restarts = 0;

    bool feasible() const { return status == OutcomeStatus::Feasible; }
};

/// Re-instantiates `params` from scratch and model checks it; returns the result
/// when the valuation is graph preserving at `eps` and satisfies `spec`.
std::optional<CheckResult> certify(const ParametricMDP& model, const Specification& spec,
                                   const std::vector<double>& params, double eps,
                                   CheckMethod method = CheckMethod::ValueIteration);

/// Solver settings of the convex subproblems.
SolverSettings subproblem_settings(SolverMethod method, std::size_t max_iter);

double next_tau(double tau, double mu, double tau_max);
double next_delta(double delta, bool accepted, double gamma, double delta_max);
double next_beta(double beta, bool accepted, double step);
/// Strict improvement of `value` over `best` in the direction of the threshold.
bool improves(const Specification& spec, double value, double best);

SynthesisOutcome run_ccp(const ParametricMDP& model, const Specification& spec, const CcpConfig& config = {},
                         std::uint64_t seed = 0);
SynthesisOutcome run_scp(const ParametricMDP& model, const Specification& spec, const ScpConfig& config = {},
                         std::uint64_t seed = 0);
SynthesisOutcome run_scp_regularized(const ParametricMDP& model, const Specification& spec,
                                     const RegularizedScpConfig& config = {}, std::uint64_t seed = 0);
/// Throws NonRectangularRegion when graph preservation couples parameters.
SynthesisOutcome run_pso(const ParametricMDP& model, const Specification& spec, const PsoConfig& config = {},
                         std::uint64_t seed = 0);

}  // namespace pmdpsyn
