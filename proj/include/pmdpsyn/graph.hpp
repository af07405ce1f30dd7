#pragma once

#include "pmdpsyn/model.hpp"

#include <cstdint>
#include <vector>

namespace pmdpsyn {

/// Exists: the adversary picks the action (maximal probabilities).
/// Forall: a property must hold under every scheduler (minimal probabilities).
enum class Quantifier { Exists, Forall };

enum class StateClass : std::uint8_t { Prob0, Prob1, Remaining };

struct StateClassification {
    std::vector<StateId> prob0;
    std::vector<StateId> prob1;
    std::vector<StateId> remaining;
    std::vector<StateClass> of;  // per state

    bool operator==(const StateClassification&) const = default;
};

/// Graph skeleton of an MDP: for every state its choices, for every choice the
/// successors carrying nonzero probability.
class ChoiceGraph {
   public:
    explicit ChoiceGraph(const ParametricMDP& model);
    explicit ChoiceGraph(const Mdp& mdp);

    std::size_t num_states() const { return choice_begin_.size() - 1; }

    /// States with a path into `targets`.
    std::vector<bool> can_reach(const std::vector<bool>& targets) const;
    /// States reaching `targets` with positive probability under every scheduler.
    std::vector<bool> forall_positive(const std::vector<bool>& targets) const;
    /// Some scheduler reaches `targets` almost surely.
    std::vector<bool> prob1_exists(const std::vector<bool>& targets) const;
    /// Every scheduler reaches `targets` almost surely.
    std::vector<bool> prob1_forall(const std::vector<bool>& targets) const;

   private:
    void finish();

    std::vector<std::size_t> choice_begin_;
    std::vector<std::size_t> entry_begin_;
    std::vector<StateId> successor_;
    std::vector<StateId> owner_;  // choice -> state
    // predecessor choices of every state, compressed
    std::vector<std::size_t> pred_begin_;
    std::vector<std::size_t> pred_choice_;
};

std::vector<bool> state_mask(std::size_t n, const std::vector<StateId>& states);

StateClassification classify_states(const ChoiceGraph& graph, const std::vector<StateId>& targets, Quantifier q);
StateClassification classify_states(const ParametricMDP& model, const std::vector<StateId>& targets, Quantifier q);

/// Quantifier whose prob1 set grounds the probability variables of `spec`:
/// upper-bounded reachability and lower-bounded cost are existential.
Quantifier quantifier_for(const Specification& spec);

/// Variable indexing after substituting graph-decided states by constants.
struct ReducedIndexing {
    static constexpr std::ptrdiff_t kConstant = -1;

    std::vector<std::ptrdiff_t> var_of_state;  // kConstant when not a variable
    std::vector<StateId> state_of_var;
    std::vector<double> constant_value;  // meaningful where var_of_state == kConstant
    std::vector<bool> infinite;          // expected cost diverges (cost specs only)
    std::vector<bool> is_target;
    bool trivially_feasible = false;

    std::size_t num_vars() const { return state_of_var.size(); }
    bool is_variable(StateId s) const { return var_of_state[s] != kConstant; }
};

/// Throws InfeasibleTrivially when the graph alone refutes `spec`.
ReducedIndexing simplify_for_encoding(const ParametricMDP& model, const Specification& spec,
                                      const StateClassification& classification);

}  // namespace pmdpsyn
