#include "pmdpsyn/modelcheck.hpp"

#include "pmdpsyn/graph.hpp"
#include "pmdpsyn/solver.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace pmdpsyn {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

// One optimal-value problem over the states flagged `variable`; every other
// state keeps its fixed value.
struct Setup {
    const Mdp& mdp;
    explicit Setup(const Mdp& m) : mdp(m) {}
    bool maximize = true;
    bool cost = false;
    bool progress = false;  // extract schedulers that provably move toward `base`
    std::vector<double> x;
    std::vector<bool> variable;
    std::vector<bool> base;
    std::vector<StateId> vars;

    double q(std::size_t c) const {
        double v = cost ? mdp.cost[c] : 0.0;
        for (std::size_t e = mdp.entry_begin[c]; e < mdp.entry_begin[c + 1]; ++e) {
            double p = mdp.probability[e];
            if (p == 0.0) continue;
            double xs = x[mdp.successor[e]];
            if (std::isinf(xs)) return kInfinity;
            v += p * xs;
        }
        return v;
    }

    bool better(double a, double b) const { return maximize ? a > b : a < b; }

    // best Q over the choices of s; infinite choices are skipped
    double best(StateId s) const {
        double b = maximize ? -kInfinity : kInfinity;
        for (std::size_t c = mdp.choice_begin[s]; c < mdp.choice_begin[s + 1]; ++c) {
            double v = q(c);
            if (std::isinf(v)) continue;
            if (better(v, b)) b = v;
        }
        return b;
    }
};

std::size_t value_iteration(Setup& st, const CheckOptions& o) {
    std::size_t it = 0;
    for (;;) {
        double diff = 0.0;
        for (StateId s : st.vars) {
            double b = st.best(s);
            if (std::isinf(b)) continue;
            diff = std::max(diff, std::abs(b - st.x[s]));
            st.x[s] = b;
        }
        ++it;
        // policy iteration takes over after the sweep budget
        if (diff < o.precision || it >= o.max_iterations) return it;
    }
}

using Scheduler = std::vector<std::size_t>;  // global choice index per state (variables only)

Scheduler extract(const Setup& st) {
    const Mdp& m = st.mdp;
    Scheduler sched(m.num_states, 0);
    for (StateId s = 0; s < m.num_states; ++s) sched[s] = m.choice_begin[s];
    auto finite_choice = [&](std::size_t c) { return !std::isinf(st.q(c)); };

    if (!st.progress) {
        for (StateId s : st.vars) {
            double b = st.best(s);
            double tol = 1e-12 * std::max(1.0, std::abs(b));
            for (std::size_t c = m.choice_begin[s]; c < m.choice_begin[s + 1]; ++c) {
                double v = st.q(c);
                if (!std::isinf(v) && std::abs(v - b) <= tol) {
                    sched[s] = c;
                    break;
                }
            }
        }
        return sched;
    }

    std::vector<bool> decided = st.base;
    std::vector<bool> assigned(m.num_states, false);
    auto touches = [&](std::size_t c) {
        for (std::size_t e = m.entry_begin[c]; e < m.entry_begin[c + 1]; ++e)
            if (m.probability[e] > 0.0 && decided[m.successor[e]]) return true;
        return false;
    };
    auto sweep = [&](bool near_optimal_only) {
        bool changed = true;
        while (changed) {
            changed = false;
            for (StateId s : st.vars) {
                if (assigned[s]) continue;
                double b = st.best(s);
                double tol = 1e-8 * std::max(1.0, std::abs(b));
                for (std::size_t c = m.choice_begin[s]; c < m.choice_begin[s + 1]; ++c) {
                    if (!finite_choice(c)) continue;
                    if (near_optimal_only && std::abs(st.q(c) - b) > tol) continue;
                    if (!touches(c)) continue;
                    sched[s] = c;
                    assigned[s] = true;
                    decided[s] = true;
                    changed = true;
                    break;
                }
            }
        }
    };
    sweep(true);
    sweep(false);
    for (StateId s : st.vars) {
        if (assigned[s]) continue;
        for (std::size_t c = m.choice_begin[s]; c < m.choice_begin[s + 1]; ++c)
            if (finite_choice(c)) {
                sched[s] = c;
                break;
            }
    }
    return sched;
}

// Exact value of a memoryless scheduler. Returns false when the scheduler fails
// to reach the goals almost surely in a cost problem.
bool evaluate(Setup& st, const Scheduler& sched) {
    const Mdp& m = st.mdp;
    std::size_t n = m.num_states;
    std::vector<bool> inside(n, false);
    if (st.progress || st.cost) {
        // states that reach `base` under the scheduler
        std::vector<std::vector<StateId>> preds(n);
        std::deque<StateId> queue;
        for (StateId s : st.vars) {
            std::size_t c = sched[s];
            for (std::size_t e = m.entry_begin[c]; e < m.entry_begin[c + 1]; ++e) {
                if (m.probability[e] <= 0.0) continue;
                StateId t = m.successor[e];
                if (st.variable[t]) preds[t].push_back(s);
                if (st.base[t] && !inside[s]) {
                    inside[s] = true;
                    queue.push_back(s);
                }
            }
        }
        while (!queue.empty()) {
            StateId t = queue.front();
            queue.pop_front();
            for (StateId s : preds[t])
                if (!inside[s]) {
                    inside[s] = true;
                    queue.push_back(s);
                }
        }
        if (st.cost) {
            for (StateId s : st.vars)
                if (!inside[s]) return false;
        }
    } else {
        for (StateId s : st.vars) inside[s] = true;
    }

    std::vector<std::ptrdiff_t> idx(n, -1);
    std::ptrdiff_t k = 0;
    for (StateId s : st.vars)
        if (inside[s]) idx[s] = k++;
    for (StateId s : st.vars)
        if (!inside[s]) st.x[s] = 0.0;
    if (k == 0) return true;

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
    for (StateId s : st.vars) {
        if (idx[s] < 0) continue;
        std::size_t c = sched[s];
        auto r = static_cast<Eigen::Index>(idx[s]);
        trip.emplace_back(r, r, 1.0);
        if (st.cost) rhs[r] += m.cost[c];
        for (std::size_t e = m.entry_begin[c]; e < m.entry_begin[c + 1]; ++e) {
            double p = m.probability[e];
            if (p == 0.0) continue;
            StateId t = m.successor[e];
            if (idx[t] >= 0)
                trip.emplace_back(r, static_cast<Eigen::Index>(idx[t]), -p);
            else if (!st.variable[t])
                rhs[r] += p * st.x[t];
        }
    }
    Eigen::SparseMatrix<double> A(k, k);
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) return false;
    Eigen::VectorXd sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !sol.allFinite()) return false;
    for (StateId s : st.vars)
        if (idx[s] >= 0) st.x[s] = sol[idx[s]];
    return true;
}

std::size_t policy_iteration(Setup& st, Scheduler& sched) {
    const Mdp& m = st.mdp;
    if (!evaluate(st, sched)) throw NonConvergence(0);
    std::size_t rounds = 0;
    for (; rounds < 10000; ++rounds) {
        Scheduler next = sched;
        bool improved = false;
        for (StateId s : st.vars) {
            double cur = st.q(sched[s]);
            double b = st.best(s);
            if (std::isinf(b) || !st.better(b, cur + (st.maximize ? 1 : -1) * 1e-11 * std::max(1.0, std::abs(cur))))
                continue;
            for (std::size_t c = m.choice_begin[s]; c < m.choice_begin[s + 1]; ++c) {
                double v = st.q(c);
                if (!std::isinf(v) && std::abs(v - b) <= 1e-14 * std::max(1.0, std::abs(b))) {
                    next[s] = c;
                    break;
                }
            }
            improved = improved || next[s] != sched[s];
        }
        if (!improved) break;
        std::vector<double> keep = st.x;
        if (!evaluate(st, next)) {
            st.x = std::move(keep);
            break;
        }
        sched = std::move(next);
    }
    return rounds;
}

// relative to max(1, |value|): expected costs near the graph-preservation
// boundary reach 1e6 and more
double bellman_residual(const Setup& st) {
    double r = 0.0;
    for (StateId s : st.vars) {
        double b = st.best(s);
        if (std::isinf(b)) continue;
        r = std::max(r, std::abs(st.x[s] - b) / std::max(1.0, std::abs(b)));
    }
    return r;
}

void solve_lp(Setup& st) {
    const Mdp& m = st.mdp;
    std::vector<std::ptrdiff_t> idx(m.num_states, -1);
    ConvexProblem p;
    double sense = st.maximize ? 1.0 : -1.0;  // maximal values are the least solution
    for (StateId s : st.vars)
        idx[s] = static_cast<std::ptrdiff_t>(p.add_var(0.0, st.cost ? kInf : 1.0, sense));
    for (StateId s : st.vars) {
        for (std::size_t c = m.choice_begin[s]; c < m.choice_begin[s + 1]; ++c) {
            double rhs = st.cost ? m.cost[c] : 0.0;
            bool usable = true;
            std::vector<std::pair<std::size_t, double>> coeffs{{static_cast<std::size_t>(idx[s]), 1.0}};
            for (std::size_t e = m.entry_begin[c]; e < m.entry_begin[c + 1]; ++e) {
                double pr = m.probability[e];
                if (pr == 0.0) continue;
                StateId t = m.successor[e];
                if (idx[t] >= 0)
                    coeffs.emplace_back(static_cast<std::size_t>(idx[t]), -pr);
                else if (std::isinf(st.x[t]))
                    usable = false;
                else
                    rhs += pr * st.x[t];
            }
            if (!usable) continue;
            std::size_t row = st.maximize ? p.add_row(rhs, kInf) : p.add_row(-kInf, rhs);
            for (auto [j, v] : coeffs) p.add_entry(row, j, v);
        }
    }
    auto rep = solve(p);
    if (rep.status != SolveStatus::Optimal) throw NonConvergence(rep.iterations);
    for (StateId s : st.vars) st.x[s] = rep.x[static_cast<std::size_t>(idx[s])];
}

CheckResult run(Setup& st, CheckMethod method, const CheckOptions& o, const std::vector<bool>& infinite) {
    const Mdp& m = st.mdp;
    for (StateId s = 0; s < m.num_states; ++s)
        if (st.variable[s]) st.vars.push_back(s);

    CheckResult res;
    res.optimization = st.maximize ? Optimization::Maximize : Optimization::Minimize;
    Scheduler sched;
    if (method == CheckMethod::ValueIteration) {
        res.iterations = value_iteration(st, o);
        sched = extract(st);
        policy_iteration(st, sched);
        if (bellman_residual(st) > o.residual_tolerance) throw NonConvergence(res.iterations);
    } else {
        solve_lp(st);
        sched = extract(st);
    }
    res.per_state = st.x;
    res.infinite = infinite;
    res.scheduler.assign(m.num_states, 0);
    for (StateId s = 0; s < m.num_states; ++s) {
        if (st.variable[s]) res.scheduler[s] = sched[s] - m.choice_begin[s];
        if (!st.cost) res.per_state[s] = std::clamp(res.per_state[s], 0.0, 1.0);
    }
    res.at_initial = res.per_state[m.initial];
    res.initial_infinite = infinite[m.initial];
    return res;
}

}  // namespace

CheckResult reach_prob(const Mdp& mdp, const std::vector<StateId>& targets, Optimization opt, CheckMethod method,
                       const CheckOptions& options) {
    bool maximize = opt == Optimization::Maximize;
    auto cls = classify_states(ChoiceGraph(mdp), targets, maximize ? Quantifier::Exists : Quantifier::Forall);
    Setup st(mdp);
    st.maximize = maximize;
    st.progress = maximize;
    std::size_t n = mdp.num_states;
    st.x.assign(n, 0.0);
    st.variable.assign(n, false);
    st.base.assign(n, false);
    for (StateId s = 0; s < n; ++s) {
        if (cls.of[s] == StateClass::Prob1) {
            st.x[s] = 1.0;
            st.base[s] = true;
        } else if (cls.of[s] == StateClass::Remaining) {
            st.variable[s] = true;
        }
    }
    auto res = run(st, method, options, std::vector<bool>(n, false));
    res.satisfied = false;
    return res;
}

CheckResult expected_cost(const Mdp& mdp, const std::vector<StateId>& goals, Optimization opt, CheckMethod method,
                          const CheckOptions& options) {
    bool maximize = opt == Optimization::Maximize;
    std::size_t n = mdp.num_states;
    ChoiceGraph g(mdp);
    auto gm = state_mask(n, goals);
    auto finite = maximize ? g.prob1_forall(gm) : g.prob1_exists(gm);
    std::vector<bool> infinite(n, false);
    std::vector<StateId> bad;
    Setup st(mdp);
    st.maximize = maximize;
    st.cost = true;
    st.progress = !maximize;
    st.x.assign(n, 0.0);
    st.variable.assign(n, false);
    st.base = gm;
    for (StateId s = 0; s < n; ++s) {
        if (gm[s]) continue;
        if (finite[s]) {
            st.variable[s] = true;
        } else {
            infinite[s] = true;
            st.x[s] = kInfinity;
            bad.push_back(s);
        }
    }
    if (infinite[mdp.initial] && options.infinite_cost == InfiniteCostPolicy::Throw) throw InfiniteCost(std::move(bad));
    return run(st, method, options, infinite);
}

Optimization optimization_for(const Specification& spec) {
    return spec.upper_bound() ? Optimization::Maximize : Optimization::Minimize;
}

bool meets_threshold(const Specification& spec, double value, bool infinite) {
    if (infinite) return !spec.upper_bound();
    if (spec.upper_bound()) return value <= spec.threshold + 1e-9;
    return value >= spec.threshold - 1e-9;
}

CheckResult check_spec(const Mdp& mdp, const Specification& spec, CheckMethod method, const CheckOptions& options) {
    Optimization opt = optimization_for(spec);
    CheckResult res;
    if (spec.kind == SpecKind::ReachProbability) {
        res = reach_prob(mdp, spec.targets, opt, method, options);
    } else {
        CheckOptions o = options;
        o.infinite_cost = InfiniteCostPolicy::Flag;
        res = expected_cost(mdp, spec.targets, opt, method, o);
    }
    res.satisfied = meets_threshold(spec, res.at_initial, res.initial_infinite);
    return res;
}

}  // namespace pmdpsyn
