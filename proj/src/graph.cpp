#include "pmdpsyn/graph.hpp"

#include <algorithm>
#include <deque>

namespace pmdpsyn {

ChoiceGraph::ChoiceGraph(const ParametricMDP& model) {
    choice_begin_.assign(1, 0);
    entry_begin_.assign(1, 0);
    for (std::size_t s = 0; s < model.num_states; ++s) {
        if (s < model.actions.size()) {
            for (const auto& act : model.actions[s]) {
                for (const auto& t : act.transitions)
                    if (!t.probability.is_zero()) successor_.push_back(t.successor);
                entry_begin_.push_back(successor_.size());
                owner_.push_back(s);
            }
        }
        choice_begin_.push_back(owner_.size());
    }
    finish();
}

ChoiceGraph::ChoiceGraph(const Mdp& mdp) {
    choice_begin_.assign(1, 0);
    entry_begin_.assign(1, 0);
    for (std::size_t s = 0; s < mdp.num_states; ++s) {
        for (std::size_t c = mdp.choice_begin[s]; c < mdp.choice_begin[s + 1]; ++c) {
            for (std::size_t e = mdp.entry_begin[c]; e < mdp.entry_begin[c + 1]; ++e)
                if (mdp.probability[e] > 0.0) successor_.push_back(mdp.successor[e]);
            entry_begin_.push_back(successor_.size());
            owner_.push_back(s);
        }
        choice_begin_.push_back(owner_.size());
    }
    finish();
}

void ChoiceGraph::finish() {
    std::size_t n = num_states();
    std::vector<std::size_t> count(n + 1, 0);
    for (std::size_t c = 0; c < owner_.size(); ++c)
        for (std::size_t e = entry_begin_[c]; e < entry_begin_[c + 1]; ++e)
            if (successor_[e] < n) ++count[successor_[e] + 1];
    for (std::size_t i = 0; i < n; ++i) count[i + 1] += count[i];
    pred_begin_ = count;
    pred_choice_.assign(count[n], 0);
    for (std::size_t c = 0; c < owner_.size(); ++c)
        for (std::size_t e = entry_begin_[c]; e < entry_begin_[c + 1]; ++e)
            if (successor_[e] < n) pred_choice_[count[successor_[e]]++] = c;
}

std::vector<bool> ChoiceGraph::can_reach(const std::vector<bool>& targets) const {
    std::vector<bool> r = targets;
    std::deque<StateId> queue;
    for (std::size_t s = 0; s < r.size(); ++s)
        if (r[s]) queue.push_back(s);
    while (!queue.empty()) {
        StateId t = queue.front();
        queue.pop_front();
        for (std::size_t i = pred_begin_[t]; i < pred_begin_[t + 1]; ++i) {
            StateId s = owner_[pred_choice_[i]];
            if (!r[s]) {
                r[s] = true;
                queue.push_back(s);
            }
        }
    }
    return r;
}

std::vector<bool> ChoiceGraph::forall_positive(const std::vector<bool>& targets) const {
    std::size_t n = num_states();
    std::vector<bool> r = targets;
    std::vector<bool> hit(owner_.size(), false);
    std::vector<std::size_t> open(n);
    for (std::size_t s = 0; s < n; ++s) open[s] = choice_begin_[s + 1] - choice_begin_[s];
    std::deque<StateId> queue;
    for (std::size_t s = 0; s < n; ++s)
        if (r[s]) queue.push_back(s);
    while (!queue.empty()) {
        StateId t = queue.front();
        queue.pop_front();
        for (std::size_t i = pred_begin_[t]; i < pred_begin_[t + 1]; ++i) {
            std::size_t c = pred_choice_[i];
            if (hit[c]) continue;
            hit[c] = true;
            StateId s = owner_[c];
            if (--open[s] == 0 && !r[s]) {
                r[s] = true;
                queue.push_back(s);
            }
        }
    }
    return r;
}

std::vector<bool> ChoiceGraph::prob1_exists(const std::vector<bool>& targets) const {
    std::size_t n = num_states();
    std::vector<bool> u(n, true);
    for (;;) {
        std::vector<bool> r = targets;
        std::deque<StateId> queue;
        for (std::size_t s = 0; s < n; ++s)
            if (r[s]) queue.push_back(s);
        while (!queue.empty()) {
            StateId t = queue.front();
            queue.pop_front();
            for (std::size_t i = pred_begin_[t]; i < pred_begin_[t + 1]; ++i) {
                std::size_t c = pred_choice_[i];
                StateId s = owner_[c];
                if (r[s] || !u[s]) continue;
                bool inside = true;
                for (std::size_t e = entry_begin_[c]; e < entry_begin_[c + 1] && inside; ++e)
                    inside = u[successor_[e]];
                if (inside) {
                    r[s] = true;
                    queue.push_back(s);
                }
            }
        }
        if (r == u) return u;
        u = std::move(r);
    }
}

std::vector<bool> ChoiceGraph::prob1_forall(const std::vector<bool>& targets) const {
    std::size_t n = num_states();
    std::vector<bool> positive = forall_positive(targets);
    // states that can reach a Pmin=0 state without passing through the targets
    std::vector<bool> bad(n, false);
    std::deque<StateId> queue;
    for (std::size_t s = 0; s < n; ++s) {
        if (!positive[s]) {
            bad[s] = true;
            queue.push_back(s);
        }
    }
    while (!queue.empty()) {
        StateId t = queue.front();
        queue.pop_front();
        for (std::size_t i = pred_begin_[t]; i < pred_begin_[t + 1]; ++i) {
            StateId s = owner_[pred_choice_[i]];
            if (bad[s] || targets[s]) continue;
            bad[s] = true;
            queue.push_back(s);
        }
    }
    std::vector<bool> out(n);
    for (std::size_t s = 0; s < n; ++s) out[s] = !bad[s];
    return out;
}

std::vector<bool> state_mask(std::size_t n, const std::vector<StateId>& states) {
    std::vector<bool> m(n, false);
    for (auto s : states)
        if (s < n) m[s] = true;
    return m;
}

StateClassification classify_states(const ChoiceGraph& graph, const std::vector<StateId>& targets, Quantifier q) {
    std::size_t n = graph.num_states();
    auto t = state_mask(n, targets);
    std::vector<bool> positive = q == Quantifier::Exists ? graph.can_reach(t) : graph.forall_positive(t);
    std::vector<bool> one = q == Quantifier::Exists ? graph.prob1_exists(t) : graph.prob1_forall(t);
    StateClassification out;
    out.of.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        if (one[s]) {
            out.of[s] = StateClass::Prob1;
            out.prob1.push_back(s);
        } else if (!positive[s]) {
            out.of[s] = StateClass::Prob0;
            out.prob0.push_back(s);
        } else {
            out.of[s] = StateClass::Remaining;
            out.remaining.push_back(s);
        }
    }
    return out;
}

StateClassification classify_states(const ParametricMDP& model, const std::vector<StateId>& targets, Quantifier q) {
    return classify_states(ChoiceGraph(model), targets, q);
}

Quantifier quantifier_for(const Specification& spec) {
    bool upper = spec.upper_bound();
    if (spec.kind == SpecKind::ReachProbability) return upper ? Quantifier::Exists : Quantifier::Forall;
    return upper ? Quantifier::Forall : Quantifier::Exists;
}

ReducedIndexing simplify_for_encoding(const ParametricMDP& model, const Specification& spec,
                                      const StateClassification& cls) {
    std::size_t n = model.num_states;
    if (cls.of.size() != n) throw ShapeMismatch("classification does not match the model");
    ReducedIndexing r;
    r.var_of_state.assign(n, ReducedIndexing::kConstant);
    r.constant_value.assign(n, 0.0);
    r.infinite.assign(n, false);
    r.is_target = state_mask(n, spec.targets);
    bool reach = spec.kind == SpecKind::ReachProbability;

    for (std::size_t s = 0; s < n; ++s) {
        if (reach) {
            if (cls.of[s] == StateClass::Prob1) {
                r.constant_value[s] = 1.0;
            } else if (cls.of[s] == StateClass::Remaining) {
                r.var_of_state[s] = static_cast<std::ptrdiff_t>(r.state_of_var.size());
                r.state_of_var.push_back(s);
            }
        } else {
            if (r.is_target[s]) continue;
            if (cls.of[s] == StateClass::Prob1) {
                r.var_of_state[s] = static_cast<std::ptrdiff_t>(r.state_of_var.size());
                r.state_of_var.push_back(s);
            } else {
                r.infinite[s] = true;
            }
        }
    }

    StateId init = model.initial;
    double lambda = spec.threshold;
    bool upper = spec.upper_bound();
    if (reach) {
        StateClass c = cls.of[init];
        if (upper) {
            if (c == StateClass::Prob1 && lambda < 1.0)
                throw InfeasibleTrivially("initial state reaches the targets almost surely");
            r.trivially_feasible = c == StateClass::Prob0 || lambda >= 1.0;
        } else {
            if (c == StateClass::Prob0 && lambda > 0.0)
                throw InfeasibleTrivially("targets are unreachable from the initial state");
            r.trivially_feasible = c == StateClass::Prob1 || lambda <= 0.0;
        }
    } else {
        if (upper) {
            if (r.infinite[init]) throw InfeasibleTrivially("expected cost from the initial state is infinite");
            r.trivially_feasible = r.is_target[init];
        } else {
            if (r.is_target[init] && lambda > 0.0)
                throw InfeasibleTrivially("initial state is a goal; its expected cost is 0");
            r.trivially_feasible = r.infinite[init] || lambda <= 0.0;
        }
    }
    return r;
}

}  // namespace pmdpsyn
