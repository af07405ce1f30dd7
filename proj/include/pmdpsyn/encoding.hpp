#pragma once

#include "pmdpsyn/graph.hpp"
#include "pmdpsyn/model.hpp"
#include "pmdpsyn/solver.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace pmdpsyn {

/// coeff * y * z + affine_part * z, with y a parameter and z a probability variable.
struct BilinearTerm {
    std::size_t row = 0;
    std::size_t prob_var = 0;
    ParamId param_var = 0;
    double coeff = 0.0;
    double affine_part = 0.0;
};

/// Constraint of one (state, action) pair, written as
///   sense * (sum(terms) + linear . x + constant - p_s) <= 0
/// where x = [parameters, probability variables]. sense is +1 for upper-bounded
/// specs (p_s >= ...) and -1 for lower-bounded ones (p_s <= ...).
struct BellmanRow {
    StateId state = 0;
    std::size_t action = 0;
    std::size_t prob_var = 0;  // index of p_s among the probability variables
    double constant = 0.0;     // cost plus constant successor contributions
    std::vector<std::pair<std::size_t, double>> linear;  // column in x, coefficient
    std::vector<std::size_t> terms;                      // into QcqpEncoding::terms
};

/// P(s, a, s') for a transition whose probability depends on parameters.
struct ParametricTransition {
    TransitionRef ref;
    double constant = 0.0;
    std::vector<std::pair<ParamId, double>> coeffs;

    double value(const std::vector<double>& params) const {
        double v = constant;
        for (const auto& [p, c] : coeffs) v += c * params[p];
        return v;
    }
};

struct QcqpEncoding {
    SpecKind kind = SpecKind::ReachProbability;
    Direction direction = Direction::AtMost;
    double threshold = 0.0;
    double eps = 1e-6;

    std::size_t num_params = 0;
    std::size_t num_probs = 0;
    std::size_t initial_var = 0;  // probability variable of the initial state
    ReducedIndexing indexing;

    /// Admissible parameter box; when `box_region` is false the bounds are
    /// infinite and graph preservation is enforced by one row per parametric
    /// transition instead.
    bool box_region = false;
    std::vector<double> param_lower;
    std::vector<double> param_upper;
    double prob_upper = 1.0;  // +inf for expected cost

    std::vector<ParametricTransition> transitions;
    std::vector<BellmanRow> rows;
    std::vector<BilinearTerm> terms;

    double sense() const { return direction == Direction::AtMost ? 1.0 : -1.0; }
    std::size_t param_col(ParamId p) const { return p; }
    std::size_t prob_col(std::size_t v) const { return num_params + v; }
    std::size_t penalty_col(std::size_t v) const { return num_params + num_probs + v; }
    std::size_t num_cols() const { return num_params + 2 * num_probs; }

    /// sense * (rhs - p_s) of a row at (params, probs); <= 0 means satisfied.
    double row_violation(std::size_t row, const std::vector<double>& params, const std::vector<double>& probs) const;
    /// Whether (params, probs) satisfies every row, the threshold and graph preservation.
    bool feasible(const std::vector<double>& params, const std::vector<double>& probs, double tol = 1e-9) const;
};

/// Throws InfeasibleTrivially (from simplify_for_encoding) or SpecError.
QcqpEncoding build_qcqp(const ParametricMDP& model, const Specification& spec, const StateClassification& cls,
                        double eps);
QcqpEncoding build_qcqp(const ParametricMDP& model, const Specification& spec, double eps);

/// coeff * y * z = h_cvx + h_ccv with h_cvx = |d| (y + sign z)^2, h_ccv = -|d| (y^2 + z^2), d = coeff / 2.
struct DcParts {
    double d = 0.0;     // |coeff| / 2
    double sign = 1.0;  // +1 when coeff > 0
    double convex(double y, double z) const { return d * (y + sign * z) * (y + sign * z); }
    double concave(double y, double z) const { return -d * (y * y + z * z); }
    /// First-order expansion of the concave part at (yh, zh); never below it.
    double concave_linearized(double y, double z, double yh, double zh) const {
        return d * (yh * yh + zh * zh) - 2.0 * d * (yh * y + zh * z);
    }
};

DcParts dc_decompose(double coeff);
DcParts dc_decompose(const BilinearTerm& term);

struct Anchor {
    std::vector<double> params;
    std::vector<double> probs;
};

enum class Approximation { Ccp, Scp };

struct ApproxSettings {
    Approximation kind = Approximation::Ccp;
    double tau = 1.0;
    double delta = 2.0;  // trust region radius, Scp only
};

/// Column layout of both approximations: [parameters, probability variables, penalties].
/// Row layout: Bellman rows, threshold row, graph rows (non-box regions only),
/// then for Scp the trust-region rows of probability variables and of
/// parametric transitions.
ConvexProblem convexify_ccp(const QcqpEncoding& q, const Anchor& anchor, double tau);
ConvexProblem linearize_scp(const QcqpEncoding& q, const Anchor& anchor, double tau, double delta);
ConvexProblem build_approximation(const QcqpEncoding& q, const Anchor& anchor, const ApproxSettings& s);

/// Rewrites the anchor-, tau- and delta-dependent values of a problem built by
/// build_approximation; the result equals a fresh build bit for bit.
/// Throws ShapeMismatch when the anchor or problem does not fit.
void update_anchor(ConvexProblem& problem, const QcqpEncoding& q, const Anchor& anchor, const ApproxSettings& s);

/// Parameter part, probability part and penalty part of a solution vector.
struct SplitSolution {
    std::vector<double> params;
    std::vector<double> probs;
    std::vector<double> penalties;
    double penalty_sum() const;
};
SplitSolution split_solution(const QcqpEncoding& q, const std::vector<double>& x);

/// Probability-variable values taken from per-state model-checking values.
std::vector<double> probs_from_states(const QcqpEncoding& q, const std::vector<double>& per_state);

/// A parameter point with every parametric transition at least `margin`:
/// the box center, or the solution of a small QP otherwise.
std::vector<double> interior_point(const QcqpEncoding& q, double margin);

/// Moves `params` into the admissible region: clamps to the box, or solves
/// a projection QP when the region is not a box. Returns nullopt when the
/// projection fails.
std::optional<std::vector<double>> repair_params(const QcqpEncoding& q, const std::vector<double>& params);

}  // namespace pmdpsyn
