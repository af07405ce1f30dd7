#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace pmdpsyn {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// weight * (x_i + sign * x_j)^2, or weight * x_i^2 when j < 0. weight >= 0.
struct QuadAtom {
    double weight = 0.0;
    std::size_t i = 0;
    std::ptrdiff_t j = -1;
    double sign = 1.0;

    double value(const std::vector<double>& x) const {
        double a = x[i] + (j >= 0 ? sign * x[static_cast<std::size_t>(j)] : 0.0);
        return weight * a * a;
    }
    bool operator==(const QuadAtom&) const = default;
};

struct RowAtom {
    std::size_t row = 0;
    QuadAtom atom;
    bool operator==(const RowAtom&) const = default;
};

struct Entry {
    std::size_t row = 0;
    std::size_t col = 0;
    double value = 0.0;
    bool operator==(const Entry&) const = default;
};

/// minimize   sum(objective_atoms) + q'x + objective_constant
/// subject to row_lower <= A x + sum(row atoms of the row) <= row_upper
///            var_lower <= x <= var_upper
/// Rows carrying atoms must have row_lower = -inf, which keeps the problem convex.
struct ConvexProblem {
    std::size_t num_vars = 0;
    std::vector<double> q;
    double objective_constant = 0.0;
    std::vector<QuadAtom> objective_atoms;
    std::vector<double> var_lower;
    std::vector<double> var_upper;
    std::vector<Entry> entries;
    std::vector<double> row_lower;
    std::vector<double> row_upper;
    std::vector<RowAtom> row_atoms;

    std::size_t num_rows() const { return row_lower.size(); }
    std::size_t add_var(double lo, double hi, double cost = 0.0);
    std::size_t add_row(double lo, double hi);
    void add_entry(std::size_t row, std::size_t col, double value) { entries.push_back({row, col, value}); }

    double objective(const std::vector<double>& x) const;
    std::vector<double> row_values(const std::vector<double>& x) const;
    /// Throws ShapeMismatch or std::invalid_argument.
    void validate() const;

    bool operator==(const ConvexProblem&) const = default;
};

enum class SolveStatus { Optimal, PrimalInfeasible, MaxIterations };

const char* to_string(SolveStatus s);

/// Admm is the operator-splitting method with polishing and warm starts.
/// InteriorPoint is a primal-dual path-following method; it ignores warm
/// starts and reports PrimalInfeasible only heuristically, but reaches high
/// accuracy on degenerate linear programs where ADMM stalls.
enum class SolverMethod { Admm, InteriorPoint };

const char* to_string(SolverMethod m);

struct SolverSettings {
    SolverMethod method = SolverMethod::Admm;
    double eps_abs = 1e-8;
    double eps_rel = 1e-8;
    double eps_prim_inf = 1e-6;
    std::size_t max_iter = 200000;
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6;
    bool adaptive_rho = true;
    int scaling_iters = 10;
    bool polish = true;
    int polish_rounds = 10;
    std::size_t check_every = 25;
    std::size_t ipm_max_iter = 200;
};

/// Dual convention: a negative multiplier marks an active lower bound, a
/// positive one an active upper bound.
struct WarmStart {
    std::vector<double> x;
    std::vector<double> y_rows;
    std::vector<double> y_bounds;
};

struct SolveReport {
    SolveStatus status = SolveStatus::MaxIterations;
    std::vector<double> x;
    std::vector<double> y_rows;
    std::vector<double> y_bounds;
    double objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    std::size_t iterations = 0;
    bool polished = false;

    WarmStart warm_start() const { return {x, y_rows, y_bounds}; }
};

/// Euclidean projection of (u, t) onto {(u, t) : t >= w u^2}, w > 0.
std::pair<double, double> project_parabola(double u, double t, double w);

/// (max bound violation, max of stationarity and complementarity violation).
std::pair<double, double> residuals(const ConvexProblem& problem, const std::vector<double>& x,
                                    const std::vector<double>& y_rows, const std::vector<double>& y_bounds);

SolveReport solve(const ConvexProblem& problem, const SolverSettings& settings = {},
                  const WarmStart* warm_start = nullptr);

/// Plain-text standard form: objective, triplet-listed constraint matrix, bounds.
std::string dump_problem(const ConvexProblem& problem);
/// Throws ParseError.
ConvexProblem load_problem(const std::string& text);

}  // namespace pmdpsyn
