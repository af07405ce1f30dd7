// Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion; exits 0
// only when every selected criterion passes. `--criterion N` selects one.
#include "../support/models.hpp"
#include "../support/oracles.hpp"
#include "pmdpsyn/encoding.hpp"
#include "pmdpsyn/errors.hpp"
#include "pmdpsyn/gridworld.hpp"
#include "pmdpsyn/io.hpp"
#include "pmdpsyn/modelcheck.hpp"
#include "pmdpsyn/synthesis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>

using namespace pmdpsyn;

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kEps = 1e-6;

struct Verdict {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double fig2_value(double v) { return v * v * (1 - v); }

template <class... A>
std::string fmt(const char* f, A... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::optional<QcqpEncoding> try_encode(const ParametricMDP& m, const Specification& spec) {
    try {
        return build_qcqp(m, spec, kEps);
    } catch (const InfeasibleTrivially&) {
        return std::nullopt;
    }
}

// Threshold a little beyond the value at a random valuation, so most instances
// are neither vacuous nor trivially infeasible.
Specification random_reach_spec(std::mt19937_64& rng, const ParametricMDP& m, bool upper) {
    Specification spec{SpecKind::ReachProbability, testsupport::random_targets(rng, m.num_states), 0.0,
                       upper ? Direction::AtMost : Direction::AtLeast};
    auto v = testsupport::random_point(rng, m.num_parameters());
    double at = check_spec(instantiate(m, Valuation::from_dense(v)), spec).at_initial;
    spec.threshold = upper ? 0.8 * at : at + 0.2 * (1 - at);
    return spec;
}

// 1. value iteration and the LP agree on random MDPs
Verdict oracle_equivalence() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    std::uniform_int_distribution<std::size_t> N(2, 50);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        std::size_t n = N(rng);
        auto m = testsupport::random_pmdp(rng, n, 3, 3);
        auto mdp = instantiate(m, Valuation::from_dense(testsupport::random_point(rng, 3)));
        auto targets = testsupport::random_targets(rng, n);
        for (auto opt : {Optimization::Maximize, Optimization::Minimize}) {
            auto vi = reach_prob(mdp, targets, opt);
            auto lp = reach_prob(mdp, targets, opt, CheckMethod::LinearProgram);
            for (StateId s = 0; s < n; ++s) worst = std::max(worst, std::abs(vi.per_state[s] - lp.per_state[s]));
        }
    }
    double t = seconds_since(t0);
    return {worst <= 1e-7 && t < 60.0, fmt("max |VI - LP| = %.2e over 200 MDPs (max and min), %.1f s", worst, t)};
}

// 2. closed form on the fig2 model
Verdict closed_form() {
    auto m = testsupport::fig2();
    auto spec = parse_spec("P<=0.5 [F target]", m);
    double worst = 0.0;
    for (int i = 1; i <= 9; ++i) {
        double v = i / 10.0;
        auto r = check_spec(instantiate(m, Valuation::from_dense({v})), spec);
        worst = std::max(worst, std::abs(r.at_initial - fig2_value(v)));
    }
    return {worst <= 1e-9, fmt("max |check_spec - v^2(1-v)| = %.2e at v = 0.1..0.9", worst)};
}

// 3. as stated: model-checked feasible points satisfy every convexified row
// at arbitrary anchors with k = 0
Verdict over_estimator() {
    std::mt19937_64 rng(1003);
    std::size_t models = 0, checked = 0, violated = 0;
    double worst = 0.0;
    while (models < 50) {
        auto m = testsupport::random_pmdp(rng, 3 + rng() % 8, 1, 2);
        auto targets = testsupport::random_targets(rng, m.num_states);
        Specification spec{SpecKind::ReachProbability, targets, 0.5,
                           models % 2 ? Direction::AtMost : Direction::AtLeast};
        auto q = try_encode(m, spec);
        if (!q || q->num_probs == 0) continue;
        ++models;
        auto opt = optimization_for(spec);
        for (int a = 0; a < 20; ++a) {
            Anchor anchor{testsupport::random_point(rng, q->num_params),
                          testsupport::random_point(rng, q->num_probs, 0.0, 1.0)};
            auto p = convexify_ccp(*q, anchor, 1.0);
            for (int j = 0; j < 5; ++j) {
                auto v = testsupport::random_point(rng, q->num_params);
                auto res = reach_prob(instantiate(m, Valuation::from_dense(v)), targets, opt);
                if (!meets_threshold(spec, res.at_initial)) continue;
                auto probs = probs_from_states(*q, res.per_state);
                std::vector<double> x(v);
                x.insert(x.end(), probs.begin(), probs.end());
                x.resize(q->num_cols(), 0.0);
                auto g = p.row_values(x);
                ++checked;
                double slack = 0.0;
                for (std::size_t r = 0; r < p.num_rows(); ++r)
                    slack = std::min({slack, p.row_upper[r] - g[r], g[r] - p.row_lower[r]});
                if (slack < -1e-9) ++violated;
                worst = std::min(worst, slack);
            }
        }
    }
    return {violated == 0,
            fmt("%zu of %zu feasible model-checked points violate a convexified row (worst slack %.3g); "
                "the convexification over-estimates, so points away from the anchor are cut off",
                violated, checked, worst)};
}

// 4. zero penalty implies an independently certified valuation
Verdict ccp_soundness() {
    std::mt19937_64 rng(1004);
    CcpConfig cfg;
    cfg.max_iters = 150;
    std::size_t runs = 0, zero = 0, feasible = 0, bad = 0;
    for (int k = 0; k < 150; ++k) {
        std::size_t n = 3 + rng() % 14;
        bool cost = k % 3 == 2;
        auto m = testsupport::random_pmdp(rng, n, 2, 1 + rng() % 3, cost);
        Specification spec = random_reach_spec(rng, m, k % 2);
        if (cost) {
            spec.kind = SpecKind::ExpectedCost;
            spec.threshold = std::uniform_real_distribution<double>(0.5, 8.0)(rng);
        }
        auto o = run_ccp(m, spec, cfg, k);
        ++runs;
        for (const auto& r : o.trace) {
            if (!(r.penalty_sum <= 1e-9)) continue;
            ++zero;
            if (!certify(m, spec, r.params, kEps)) ++bad;
        }
        if (o.feasible()) {
            ++feasible;
            if (!certify(m, spec, o.valuation, kEps)) ++bad;
        }
    }
    return {bad == 0, fmt("%zu runs (reach and cost, both directions), %zu Feasible, %zu iterations with total "
                          "penalty <= 1e-9, %zu counterexamples",
                          runs, feasible, zero, bad)};
}

using Driver = std::function<SynthesisOutcome(const ParametricMDP&, const Specification&, std::uint64_t)>;

std::vector<std::pair<std::string, Driver>> drivers(bool with_regularized) {
    std::vector<std::pair<std::string, Driver>> d = {
        {"ccp", [](auto& m, auto& s, auto seed) { return run_ccp(m, s, {}, seed); }},
        {"scp", [](auto& m, auto& s, auto seed) { return run_scp(m, s, {}, seed); }},
        {"pso", [](auto& m, auto& s, auto seed) { return run_pso(m, s, {}, seed); }},
    };
    if (with_regularized)
        d.push_back({"scp-reg", [](auto& m, auto& s, auto seed) { return run_scp_regularized(m, s, {}, seed); }});
    return d;
}

// 5. every method certifies both fig2 thresholds quickly
Verdict fig2_end_to_end() {
    auto m = testsupport::fig2();
    Verdict v;
    std::ostringstream os;
    for (const auto& [name, run] : drivers(false)) {
        for (const char* text : {"P<=0.1 [F target]", "P>=0.14 [F target]"}) {
            auto spec = parse_spec(text, m);
            auto t0 = Clock::now();
            auto o = run(m, spec, 0);
            double t = seconds_since(t0);
            bool ok = o.feasible() && o.iterations <= 100 && t < 5.0 && certify(m, spec, o.valuation, kEps);
            if (ok && !spec.upper_bound()) ok = o.valuation[0] >= 0.546 - 1e-3 && o.valuation[0] <= 0.782 + 1e-3;
            v.pass = v.pass && ok;
            os << name << ' ' << text << ": " << (o.feasible() ? "v=" + fmt("%.4f", o.valuation[0]) : "not found")
               << fmt(" it=%zu %.3fs; ", o.iterations, t);
        }
    }
    v.detail = os.str();
    v.detail.resize(v.detail.size() - 2);
    return v;
}

// 6. the unreachable threshold is never met
Verdict infeasible_threshold() {
    auto m = testsupport::fig2();
    auto spec = parse_spec("P>=0.2 [F target]", m);
    std::size_t runs = 0, feasible = 0;
    for (const auto& [name, run] : drivers(true))
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            ++runs;
            feasible += run(m, spec, seed).feasible();
        }
    return {feasible == 0, fmt("%zu runs (4 methods x 20 seeds), %zu Feasible; max of v^2(1-v) is 4/27", runs, feasible)};
}

// 7. SCP acceptance, radius and termination rules
Verdict scp_discipline() {
    std::mt19937_64 rng(1007);
    ScpConfig cfg;
    std::size_t runs = 0, broken = 0, trivially = 0;
    std::string first;
    auto check = [&](const ParametricMDP& m, const Specification& spec, std::uint64_t seed) {
        auto o = run_scp(m, spec, cfg, seed);
        ++runs;
        if (o.reason == NotFoundReason::Infeasible && o.trace.empty()) {
            ++trivially;
            return;
        }
        bool ok = o.feasible() || o.reason == NotFoundReason::TrustRegionCollapsed ||
                  o.reason == NotFoundReason::IterationCap || o.reason == NotFoundReason::Infeasible;
        ok = ok && o.iterations == o.trace.size();
        ok = ok && (o.reason != NotFoundReason::IterationCap || o.iterations == cfg.max_iters);
        ok = ok && (o.trace.empty() || o.trace[0].delta == cfg.delta0);
        double best = spec.upper_bound() ? 1e30 : 0.0;
        for (std::size_t i = 0; i < o.trace.size(); ++i) {
            const auto& r = o.trace[i];
            bool last = i + 1 == o.trace.size();
            if (last && o.feasible()) break;
            if (r.accepted) {
                ok = ok && improves(spec, r.mc_value, best);
                best = r.mc_value;
            }
            double next = next_delta(r.delta, r.accepted, cfg.gamma, cfg.delta_max);
            if (!last) ok = ok && o.trace[i + 1].delta == next && r.delta >= cfg.omega;
            if (last && o.reason == NotFoundReason::TrustRegionCollapsed) ok = ok && next < cfg.omega;
        }
        if (o.feasible()) ok = ok && certify(m, spec, o.valuation, kEps).has_value();
        if (!ok) {
            ++broken;
            if (first.empty()) first = "; first violation: " + spec.to_string() + fmt(" seed %llu", (unsigned long long)seed);
        }
    };
    // 100 random models that reach the iteration loop, plus the rejected ones met on the way
    for (std::uint64_t k = 0; runs - trivially < 100; ++k) {
        std::size_t n = 4 + rng() % 14;
        auto m = testsupport::random_pmdp(rng, n, 2, 1 + rng() % 3);
        check(m, random_reach_spec(rng, m, k % 2), k);
    }
    auto fig2 = testsupport::fig2();
    for (const char* text : {"P<=0.1 [F target]", "P>=0.14 [F target]", "P>=0.2 [F target]", "P<=0 [F target]"})
        check(fig2, parse_spec(text, fig2), 0);
    return {broken == 0, fmt("%zu SCP runs, %zu violating runs, %zu more rejected before iterating (trivially infeasible)",
                             runs, broken, trivially) + first};
}

// 8. convex solver against active-set enumeration
Verdict solver_correctness() {
    std::mt19937_64 rng(1008);
    std::size_t bad = 0, total = 0;
    double worst_obj = 0.0, worst_kkt = 0.0;
    for (int k = 0; k < 100; ++k) {
        bool lp = k % 2;
        std::size_t n = lp ? 1 + rng() % 5 : 1 + rng() % 10;
        std::size_t m = lp ? rng() % 7 : rng() % 16;
        auto p = lp ? testsupport::random_lp(rng, n, m) : testsupport::random_qp(rng, n, m);
        auto oracle = testsupport::active_set_objective(p);
        for (auto method : {SolverMethod::Admm, SolverMethod::InteriorPoint}) {
            SolverSettings st;
            st.method = method;
            auto rep = solve(p, st);
            ++total;
            if (!oracle || rep.status != SolveStatus::Optimal) {
                ++bad;
                continue;
            }
            double d = std::abs(rep.objective - *oracle);
            worst_obj = std::max(worst_obj, d);
            worst_kkt = std::max({worst_kkt, rep.primal_residual, rep.dual_residual});
            if (d > 1e-6 || rep.primal_residual > 1e-8 || rep.dual_residual > 1e-8) ++bad;
        }
    }
    return {bad == 0, fmt("%zu solves (50 QPs + 50 LPs, ADMM and interior point), %zu failures, "
                          "max objective gap %.2e, max KKT residual %.2e",
                          total, bad, worst_obj, worst_kkt)};
}

// 9. refreshing the anchor in place equals rebuilding
Verdict incremental_update() {
    std::mt19937_64 rng(1009);
    std::size_t iterations = 0, coeff_mismatch = 0;
    double worst = 0.0;
    SolverSettings st = subproblem_settings(SolverMethod::InteriorPoint, 4000);
    while (iterations < 100) {
        std::size_t n = 4 + rng() % 12;
        auto m = testsupport::random_pmdp(rng, n, 2, 2);
        auto spec = random_reach_spec(rng, m, iterations % 2);
        auto q = try_encode(m, spec);
        if (!q || q->num_probs == 0) continue;
        auto kind = iterations < 50 ? Approximation::Ccp : Approximation::Scp;
        ApproxSettings s{kind, kind == Approximation::Ccp ? 0.05 : 1e4, 2.0};
        Anchor a{interior_point(*q, 2 * kEps), std::vector<double>(q->num_probs, 0.5)};
        auto problem = build_approximation(*q, a, s);
        for (int step = 0; step < 5 && iterations < 100; ++step, ++iterations) {
            auto rep = solve(problem, st);
            auto sol = split_solution(*q, rep.x);
            Anchor next{repair_params(*q, sol.params).value_or(a.params), {}};
            auto res = check_spec(instantiate(m, Valuation::from_dense(next.params)), spec);
            next.probs = probs_from_states(*q, res.per_state);
            s.tau = kind == Approximation::Ccp ? s.tau + 0.5 : s.tau;
            s.delta = step % 2 ? s.delta * 1.5 : s.delta / 1.5;
            update_anchor(problem, *q, next, s);
            auto fresh = build_approximation(*q, next, s);
            if (!(problem == fresh)) ++coeff_mismatch;
            auto r1 = solve(problem, st);
            auto r2 = solve(fresh, st);
            for (std::size_t j = 0; j < r1.x.size(); ++j) worst = std::max(worst, std::abs(r1.x[j] - r2.x[j]));
            a = next;
        }
    }
    return {coeff_mismatch == 0 && worst <= 1e-9,
            fmt("%zu iterations (50 CCP, 50 SCP), %zu coefficient mismatches, max solution difference %.2e",
                iterations, coeff_mismatch, worst)};
}

// 10. SCP on the 500-state gridworld; PSO with the same wall-time budget is reported
Verdict gridworld() {
    auto m = make_gridworld();
    std::mt19937_64 rng(1010);
    auto goal = m.labels.at("goal");
    Specification probe{SpecKind::ReachProbability, goal, 0.0, Direction::AtLeast};
    double best = 0.0;
    for (int i = 0; i < 100; ++i) {
        auto v = testsupport::random_point(rng, m.num_parameters(), kEps * 2, 1 - kEps * 2);
        best = std::max(best, check_spec(instantiate(m, Valuation::from_dense(v)), probe).at_initial);
    }
    Specification spec{SpecKind::ReachProbability, goal, 0.95 * best, Direction::AtLeast};
    auto t0 = Clock::now();
    auto o = run_scp(m, spec, {}, 0);
    double t = seconds_since(t0);
    bool ok = o.feasible() && t < 120.0 && certify(m, spec, o.valuation, kEps);
    PsoConfig pc;
    pc.time_limit = std::max(t, 1e-3);
    auto p = run_pso(m, spec, pc, 0);
    double pso_best = p.trace.empty() ? 0.0 : p.trace.back().mc_value;
    return {ok, fmt("%zu states, %zu parameters, sampled best %.4f, threshold %.4f; SCP %s value %.4f in %zu it, %.2f s; "
                    "PSO with %.2f s budget: %s, best %.4f after %zu it",
                    m.num_states, m.num_parameters(), best, spec.threshold, to_string(o.status),
                    o.certificate ? o.certificate->at_initial : std::numeric_limits<double>::quiet_NaN(), o.iterations, t,
                    pc.time_limit, to_string(p.status), pso_best, p.iterations)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, Verdict (*)()>> criteria = {
        {"oracle equivalence", oracle_equivalence},     {"closed form", closed_form},
        {"over-estimator", over_estimator},             {"CCP soundness", ccp_soundness},
        {"fig2 end to end", fig2_end_to_end},         {"infeasible threshold", infeasible_threshold},
        {"SCP trace discipline", scp_discipline},       {"solver correctness", solver_correctness},
        {"incremental update", incremental_update},     {"gridworld", gridworld},
    };
    int only = 0;
    for (int i = 1; i < argc; ++i)
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
    if (only < 0 || only > static_cast<int>(criteria.size())) {
        std::fprintf(stderr, "criterion must be 1..%zu\n", criteria.size());
        return 1;
    }
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only && static_cast<int>(i) + 1 != only) continue;
        Verdict v;
        auto t0 = Clock::now();
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        all = all && v.pass;
        std::printf("criterion %zu %s: %s (%s) [%.1f s]\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first,
                    v.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
