#pragma once

#include "pmdpsyn/model.hpp"

#include <cstddef>
#include <vector>

namespace pmdpsyn {

enum class Optimization { Minimize, Maximize };
enum class CheckMethod { ValueIteration, LinearProgram };
enum class InfiniteCostPolicy { Throw, Flag };

struct CheckOptions {
    double precision = 1e-10;  // absolute change that ends value iteration
    std::size_t max_iterations = 20000;  // value iteration sweeps before policy iteration
    double residual_tolerance = 1e-8;  // Bellman residual relative to max(1, |value|)
    InfiniteCostPolicy infinite_cost = InfiniteCostPolicy::Throw;
};

struct CheckResult {
    std::vector<double> per_state;
    std::vector<bool> infinite;  // expected cost diverges; per_state holds +inf there
    double at_initial = 0.0;
    bool initial_infinite = false;
    bool satisfied = false;
    Optimization optimization = Optimization::Maximize;
    std::vector<std::size_t> scheduler;  // local action index per state
    std::size_t iterations = 0;
};

/// Optimal probability of eventually reaching `targets`.
/// Throws NonConvergence.
CheckResult reach_prob(const Mdp& mdp, const std::vector<StateId>& targets, Optimization opt,
                       CheckMethod method = CheckMethod::ValueIteration, const CheckOptions& options = {});

/// Optimal expected accumulated cost until `goals`; goal states have value 0.
/// Throws InfiniteCost when the initial state diverges (unless options.infinite_cost ==
/// Flag) or NonConvergence.
CheckResult expected_cost(const Mdp& mdp, const std::vector<StateId>& goals, Optimization opt,
                          CheckMethod method = CheckMethod::ValueIteration, const CheckOptions& options = {});

/// Upper-bounded specs are checked against the maximizing scheduler, lower-bounded
/// ones against the minimizing scheduler.
CheckResult check_spec(const Mdp& mdp, const Specification& spec, CheckMethod method = CheckMethod::ValueIteration,
                       const CheckOptions& options = {});

Optimization optimization_for(const Specification& spec);

/// Whether `value` meets the threshold, with 1e-9 slack on the boundary.
bool meets_threshold(const Specification& spec, double value, bool infinite = false);

}  // namespace pmdpsyn
