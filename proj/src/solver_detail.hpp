#pragma once

#include "pmdpsyn/solver.hpp"

#include <vector>

namespace pmdpsyn::detail {

constexpr double kBig = 1e20;

inline bool has_lo(double l) { return l > -kBig; }
inline bool has_hi(double u) { return u < kBig; }

struct Scales {
    double primal = 0.0;
    double dual = 0.0;
};

std::vector<double> objective_gradient(const ConvexProblem& p, const std::vector<double>& x);
double complementarity(double y, double value, double lo, double hi);
Scales residual_scales(const ConvexProblem& p, const std::vector<double>& x, const std::vector<double>& y_rows,
                       const std::vector<double>& y_bounds);

SolveReport solve_interior_point(const ConvexProblem& problem, const SolverSettings& settings);

}  // namespace pmdpsyn::detail
