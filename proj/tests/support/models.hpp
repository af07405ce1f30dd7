#pragma once

#include "pmdpsyn/model.hpp"

#include <random>
#include <vector>

namespace testsupport {

/// models/fig2.pmdp, parsed.
pmdpsyn::ParametricMDP fig2();

std::string model_path(const std::string& name);

/// Random pMDP whose parametric rows are of the form (x, 1 - x) or
/// (x/2, 1/2 - x/2, 1/2), so every valuation in (0, 1)^V is graph preserving.
/// State 0 is initial; roughly one state in six is absorbing.
pmdpsyn::ParametricMDP random_pmdp(std::mt19937_64& rng, std::size_t states, std::size_t max_actions,
                                   std::size_t params, bool with_costs = false);

/// Valuation with every parameter uniform in [lo, hi].
std::vector<double> random_point(std::mt19937_64& rng, std::size_t params, double lo = 0.05, double hi = 0.95);

std::vector<pmdpsyn::StateId> random_targets(std::mt19937_64& rng, std::size_t states);

/// Optimal values by enumerating all memoryless deterministic schedulers and
/// solving each induced chain densely. Only for tiny models.
/// Costs are +inf where the goal is not reached almost surely.
std::vector<double> enumerate_reach(const pmdpsyn::Mdp& mdp, const std::vector<pmdpsyn::StateId>& targets, bool maximize);
std::vector<double> enumerate_cost(const pmdpsyn::Mdp& mdp, const std::vector<pmdpsyn::StateId>& goals, bool maximize);

}  // namespace testsupport
