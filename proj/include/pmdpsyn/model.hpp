#pragma once

#include "pmdpsyn/affine.hpp"
#include "pmdpsyn/errors.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pmdpsyn {

using StateId = std::size_t;

struct Transition {
    StateId successor = 0;
    AffineExpr probability;

    bool operator==(const Transition&) const = default;
};

struct Action {
    std::string name;
    std::vector<Transition> transitions;
    Rational cost = 0;

    bool operator==(const Action&) const = default;
};

/// Affine parametric MDP. Transition functions are kept exact; the floating-point
/// view is produced on demand (see Instantiator).
struct ParametricMDP {
    std::vector<std::string> parameters;
    std::size_t num_states = 0;
    StateId initial = 0;
    std::vector<std::vector<Action>> actions;  // indexed by state
    std::map<std::string, std::vector<StateId>> labels;
    bool has_costs = false;

    std::size_t num_parameters() const { return parameters.size(); }
    std::size_t num_choices() const;
    std::size_t num_transitions() const;
    /// Every state has exactly one enabled action.
    bool is_pmc() const;
    std::optional<ParamId> parameter_index(const std::string& name) const;

    bool operator==(const ParametricMDP&) const = default;
};

class Valuation {
   public:
    Valuation() = default;
    explicit Valuation(std::map<ParamId, double> values) : values_(std::move(values)) {}
    static Valuation from_dense(const std::vector<double>& values);

    void set(ParamId id, double value) { values_[id] = value; }
    bool contains(ParamId id) const { return values_.count(id) != 0; }
    /// Throws MissingParameter.
    double at(ParamId id) const;
    std::size_t size() const { return values_.size(); }
    const std::map<ParamId, double>& values() const { return values_; }

    /// Dense vector over parameters 0..n-1. Throws MissingParameter on gaps.
    std::vector<double> dense(std::size_t n) const;

   private:
    std::map<ParamId, double> values_;
};

enum class SpecKind { ReachProbability, ExpectedCost };
enum class Direction { AtMost, AtLeast };

struct Specification {
    SpecKind kind = SpecKind::ReachProbability;
    std::vector<StateId> targets;  // sorted, unique
    double threshold = 0.0;
    Direction direction = Direction::AtMost;

    bool upper_bound() const { return direction == Direction::AtMost; }
    std::string to_string() const;
};

/// Throws SpecError when `spec` does not fit the model.
void validate_spec(const ParametricMDP& model, const Specification& spec);

/// Instantiated MDP in compressed row form: state s owns choices
/// [choice_begin[s], choice_begin[s+1]); choice c owns entries
/// [entry_begin[c], entry_begin[c+1]).
struct Mdp {
    std::size_t num_states = 0;
    StateId initial = 0;
    std::vector<std::size_t> choice_begin;
    std::vector<std::size_t> entry_begin;
    std::vector<StateId> successor;
    std::vector<double> probability;
    std::vector<double> cost;  // per choice

    std::size_t num_choices() const { return entry_begin.empty() ? 0 : entry_begin.size() - 1; }
};

double eval_affine(const AffineExpr& expr, const Valuation& val);

/// Throws MissingParameter or NotWellDefined.
Mdp instantiate(const ParametricMDP& model, const Valuation& val);

struct GraphPreservation {
    bool preserving = true;
    std::vector<TransitionRef> violations;
    explicit operator bool() const { return preserving; }
};

GraphPreservation check_graph_preserving(const ParametricMDP& model, const Valuation& val, double eps);

enum class Severity { Error, Warning };

struct Diagnostic {
    Severity severity = Severity::Error;
    std::string message;
};

/// Structural well-formedness report; empty for a clean model.
std::vector<Diagnostic> validate_model(const ParametricMDP& model, double eps = 1e-6);
bool has_errors(const std::vector<Diagnostic>& diagnostics);

/// Keeps the compressed structure of a model and rewrites only the probability
/// values for a new valuation.
class Instantiator {
   public:
    explicit Instantiator(const ParametricMDP& model);

    std::size_t num_parameters() const { return num_parameters_; }
    const Mdp& mdp() const { return mdp_; }
    /// Entry index -> (state, local action, successor).
    TransitionRef entry_ref(std::size_t entry) const;

    /// Rewrites the probabilities; returns the offending entries (empty when the
    /// result is a well-defined MDP).
    std::vector<TransitionRef> assign(const std::vector<double>& values);
    /// Like assign, throws NotWellDefined instead of reporting.
    const Mdp& instantiate(const std::vector<double>& values);

    /// Smallest entry value over structurally present transitions.
    double min_entry() const;

   private:
    std::size_t num_parameters_;
    Mdp mdp_;
    std::vector<DoubleAffine> exprs_;
    std::vector<std::size_t> entry_state_;
    std::vector<std::size_t> entry_action_;
};

/// Axis-aligned admissible parameter region, when the graph-preservation
/// constraints P >= eps decouple into per-parameter bounds.
struct ParameterBox {
    std::vector<double> lower;
    std::vector<double> upper;

    std::vector<double> center() const;
    bool contains(const std::vector<double>& v, double slack = 0.0) const;
};

/// Returns the box when every parametric transition depends on exactly one
/// parameter; unreferenced parameters get [eps, 1 - eps].
std::optional<ParameterBox> rectangular_region(const ParametricMDP& model, double eps);

}  // namespace pmdpsyn
