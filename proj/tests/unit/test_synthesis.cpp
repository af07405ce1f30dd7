#include <doctest.h>

#include "../support/models.hpp"
#include "pmdpsyn/errors.hpp"
#include "pmdpsyn/io.hpp"
#include "pmdpsyn/synthesis.hpp"

#include <cmath>
#include <functional>
#include <random>

using namespace pmdpsyn;
using testsupport::fig2;

namespace {

const double kEps = 1e-6;

double fig2_value(double v) { return v * v * (1 - v); }

// root of f on [lo, hi] by bisection, f(lo) and f(hi) of opposite sign
double bisect(const std::function<double(double)>& f, double lo, double hi) {
    bool rising = f(lo) < 0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        ((f(mid) < 0) == rising ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

using Driver = std::function<SynthesisOutcome(const ParametricMDP&, const Specification&, std::uint64_t)>;

std::vector<std::pair<std::string, Driver>> drivers() {
    return {
        {"ccp", [](const auto& m, const auto& s, std::uint64_t seed) { return run_ccp(m, s, {}, seed); }},
        {"scp", [](const auto& m, const auto& s, std::uint64_t seed) { return run_scp(m, s, {}, seed); }},
        {"scp-reg", [](const auto& m, const auto& s, std::uint64_t seed) { return run_scp_regularized(m, s, {}, seed); }},
        {"pso", [](const auto& m, const auto& s, std::uint64_t seed) { return run_pso(m, s, {}, seed); }},
    };
}

void check_sound(const ParametricMDP& m, const Specification& spec, const SynthesisOutcome& o) {
    CHECK(o.iterations == o.trace.size());
    if (!o.feasible()) return;
    REQUIRE(o.certificate.has_value());
    CHECK(o.certificate->satisfied);
    CHECK(check_graph_preserving(m, Valuation::from_dense(o.valuation), kEps).preserving);
    auto again = check_spec(instantiate(m, Valuation::from_dense(o.valuation)), spec);
    CHECK(again.satisfied);
    CHECK(again.initial_infinite == o.certificate->initial_infinite);
    if (!again.initial_infinite) CHECK(again.at_initial == doctest::Approx(o.certificate->at_initial).epsilon(1e-12));
}

// P(s0 -> goal) = x, otherwise retry; expected steps 1/x
ParametricMDP geometric() {
    return parse_model(
        "pmdp\nparameters: x\nstates: 2\ninitial: 0\nlabel goal: 1\ncost 0 a: 1\ncost 1 a: 0\n"
        "state 0\naction a\n  1 : x\n  0 : 1 - x\nstate 1\naction a\n  1 : 1\n");
}

}  // namespace

TEST_CASE("schedules") {
    CHECK(next_tau(0.05, 0.4, 1e4) == 0.45);
    CHECK(next_tau(9999.9, 0.4, 1e4) == 1e4);
    double d = next_delta(2.0, false, 1.5, 1e6);
    CHECK(d == doctest::Approx(4.0 / 3.0));
    CHECK(next_delta(d, true, 1.5, 1e6) == doctest::Approx(2.0));
    CHECK(next_delta(9e5, true, 1.5, 1e6) == 1e6);
    double b = 1.0;
    for (int i = 0; i < 3; ++i) b = next_beta(b, false, 1.0);
    CHECK(b == 4.0);
    CHECK(next_beta(b, true, 1.0) == 4.0);

    auto m = fig2();
    auto le = parse_spec("P<=0.1 [F target]", m), ge = parse_spec("P>=0.1 [F target]", m);
    CHECK(improves(le, 0.2, 0.3));
    CHECK(!improves(le, 0.3, 0.3));
    CHECK(!improves(le, 0.3 - 1e-13, 0.3));
    CHECK(improves(ge, 0.3, 0.2));
    CHECK(!improves(ge, std::nan(""), 0.2));
}

TEST_CASE("fig2 with every method") {
    auto m = fig2();
    auto le = parse_spec("P<=0.1 [F target]", m);
    auto ge = parse_spec("P>=0.14 [F target]", m);
    auto f = [](double v) { return fig2_value(v) - 0.14; };
    double low = bisect(f, 0.0, 2.0 / 3.0), high = bisect(f, 2.0 / 3.0, 1.0);
    CHECK(low == doctest::Approx(0.571786).epsilon(1e-5));
    CHECK(high == doctest::Approx(0.753262).epsilon(1e-5));
    for (const auto& [name, run] : drivers()) {
        CAPTURE(name);
        auto a = run(m, le, 0);
        REQUIRE(a.feasible());
        check_sound(m, le, a);
        CHECK(fig2_value(a.valuation[0]) <= 0.1 + 1e-9);
        CHECK(a.certificate->at_initial == doctest::Approx(fig2_value(a.valuation[0])).epsilon(1e-9));

        auto b = run(m, ge, 0);
        REQUIRE(b.feasible());
        check_sound(m, ge, b);
        CHECK(b.valuation[0] >= low - 1e-9);
        CHECK(b.valuation[0] <= high + 1e-9);
        CHECK(b.iterations <= 100);
    }
}

TEST_CASE("impossible thresholds are never met") {
    auto m = fig2();
    auto spec = parse_spec("P>=0.2 [F target]", m);
    for (const auto& [name, run] : drivers())
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            CAPTURE(name);
            auto o = run(m, spec, seed);
            CHECK(!o.feasible());
            CHECK(o.reason != NotFoundReason::None);
            check_sound(m, spec, o);
        }

    // reachability is at least 1/2 for every valuation
    auto half = parse_model(
        "pmdp\nparameters: x\nstates: 3\ninitial: 0\nlabel t: 1\nstate 0\naction a\n  1 : 1/2 + 1/2*x\n  2 : 1/2 - 1/2*x\n"
        "state 1\naction a\n  1 : 1\nstate 2\naction a\n  2 : 1\n");
    auto zero = parse_spec("P<=0 [F t]", half);
    for (const auto& [name, run] : drivers()) {
        CAPTURE(name);
        CHECK(!run(half, zero, 0).feasible());
    }
}

TEST_CASE("vacuous threshold") {
    auto m = fig2();
    auto spec = parse_spec("P<=1 [F target]", m);
    auto o = run_ccp(m, spec);
    CHECK(o.feasible());
    CHECK(o.iterations <= 1);
}

TEST_CASE("SCP trace discipline") {
    std::mt19937_64 rng(11);
    ScpConfig cfg;
    for (int k = 0; k < 40; ++k) {
        std::size_t n = 4 + rng() % 12;
        auto m = testsupport::random_pmdp(rng, n, 2, 2);
        Specification spec{SpecKind::ReachProbability, testsupport::random_targets(rng, n),
                           std::uniform_real_distribution<double>(0.05, 0.95)(rng),
                           k % 2 ? Direction::AtMost : Direction::AtLeast};
        auto o = run_scp(m, spec, cfg, k);
        check_sound(m, spec, o);
        double best = spec.upper_bound() ? 1e30 : 0.0;
        for (std::size_t i = 0; i < o.trace.size(); ++i) {
            const auto& r = o.trace[i];
            CHECK(r.index == i);
            bool last = i + 1 == o.trace.size();
            if (last && o.feasible()) break;
            if (r.accepted) {
                CHECK(improves(spec, r.mc_value, best));
                best = r.mc_value;
            }
            double next = next_delta(r.delta, r.accepted, cfg.gamma, cfg.delta_max);
            if (!last) CHECK(o.trace[i + 1].delta == next);
            if (last && o.reason == NotFoundReason::TrustRegionCollapsed) CHECK(next < cfg.omega);
            if (!last) CHECK(r.delta >= cfg.omega);
        }
        if (o.reason == NotFoundReason::IterationCap) CHECK(o.iterations == cfg.max_iters);
        CHECK((o.feasible() || o.reason == NotFoundReason::TrustRegionCollapsed ||
               o.reason == NotFoundReason::IterationCap || o.reason == NotFoundReason::Infeasible));
    }
}

TEST_CASE("CCP penalty schedule and soundness") {
    std::mt19937_64 rng(12);
    CcpConfig cfg;
    cfg.max_iters = 150;
    for (int k = 0; k < 40; ++k) {
        std::size_t n = 4 + rng() % 12;
        auto m = testsupport::random_pmdp(rng, n, 2, 2);
        Specification spec{SpecKind::ReachProbability, testsupport::random_targets(rng, n),
                           std::uniform_real_distribution<double>(0.05, 0.95)(rng),
                           k % 2 ? Direction::AtMost : Direction::AtLeast};
        auto o = run_ccp(m, spec, cfg, k);
        check_sound(m, spec, o);
        if (!o.trace.empty()) CHECK(o.trace[0].tau == 0.05);
        for (std::size_t i = 0; i + 1 < o.trace.size(); ++i)
            CHECK(o.trace[i + 1].tau == next_tau(o.trace[i].tau, o.trace[i].mu, cfg.tau_max));
        for (const auto& r : o.trace)
            if (r.penalty_sum <= cfg.penalty_zero_tol) CHECK(certify(m, spec, r.params, kEps).has_value());
    }
}

TEST_CASE("expected cost") {
    auto m = geometric();
    auto le = parse_spec("E<=2 [F goal]", m);
    auto ge = parse_spec("E>=5 [F goal]", m);
    for (const auto& [name, run] : drivers()) {
        CAPTURE(name);
        auto a = run(m, le, 0);
        REQUIRE(a.feasible());
        check_sound(m, le, a);
        CHECK(a.valuation[0] >= 0.5 - 1e-6);
        auto b = run(m, ge, 0);
        REQUIRE(b.feasible());
        check_sound(m, ge, b);
        CHECK(b.valuation[0] <= 0.2 + 1e-6);
    }
}

TEST_CASE("random models, all drivers sound") {
    std::mt19937_64 rng(13);
    for (int k = 0; k < 12; ++k) {
        std::size_t n = 4 + rng() % 10;
        bool cost = k % 3 == 2;
        auto m = testsupport::random_pmdp(rng, n, 2, 2, cost);
        Specification spec{cost ? SpecKind::ExpectedCost : SpecKind::ReachProbability,
                           testsupport::random_targets(rng, n),
                           std::uniform_real_distribution<double>(0.1, cost ? 6.0 : 0.9)(rng),
                           k % 2 ? Direction::AtMost : Direction::AtLeast};
        for (const auto& [name, run] : drivers()) {
            CAPTURE(name);
            CAPTURE(k);
            check_sound(m, spec, run(m, spec, k));
        }
    }
}

TEST_CASE("PSO") {
    auto m = fig2();
    auto spec = parse_spec("P>=0.14 [F target]", m);
    auto a = run_pso(m, spec, {}, 7), b = run_pso(m, spec, {}, 7);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].params == b.trace[i].params);
        CHECK(a.trace[i].mc_value == b.trace[i].mc_value);
    }
    CHECK(a.valuation == b.valuation);

    auto coupled = parse_model(
        "pmdp\nparameters: x y\nstates: 3\ninitial: 0\nstate 0\naction a\n  1 : x\n  2 : y\n  0 : 1 - x - y\n"
        "state 1\naction a\n  1 : 1\nstate 2\naction a\n  2 : 1\n");
    CHECK_THROWS_AS(run_pso(coupled, parse_spec("P<=0.3 [F 1]", coupled)), NonRectangularRegion);

    auto constant = parse_model(
        "pmdp\nparameters:\nstates: 2\ninitial: 0\nstate 0\naction a\n  1 : 1/4\n  0 : 3/4\nstate 1\naction a\n  1 : 1\n");
    auto c = run_pso(constant, parse_spec("P>=0.5 [F 1]", constant));
    CHECK(c.feasible());
    CHECK(c.iterations <= 1);
}

TEST_CASE("non-rectangular regions") {
    auto coupled = parse_model(
        "pmdp\nparameters: x y\nstates: 3\ninitial: 0\nstate 0\naction a\n  1 : x\n  2 : y\n  0 : 1 - x - y\n"
        "state 1\naction a\n  1 : 1\nstate 2\naction a\n  2 : 1\n");
    // P(reach 1) = x / (x + y)
    auto spec = parse_spec("P>=0.8 [F 1]", coupled);
    for (auto o : {run_ccp(coupled, spec), run_scp(coupled, spec), run_scp_regularized(coupled, spec)}) {
        CAPTURE(o.method);
        CHECK(o.feasible());
        check_sound(coupled, spec, o);
    }
}

TEST_CASE("regularized SCP") {
    auto m = fig2();
    // unreachable threshold: the run minimizes p_s0 until the steps vanish
    auto spec = parse_spec("P<=0 [F target]", m);
    RegularizedScpConfig cfg;
    cfg.max_iters = 2000;
    auto o = run_scp_regularized(m, spec, cfg);
    REQUIRE(!o.valuation.empty());
    double v = o.valuation[0];
    auto mc = check_spec(instantiate(m, Valuation::from_dense(o.valuation)), spec).at_initial;
    CHECK(mc == doctest::Approx(fig2_value(v)).epsilon(1e-6));
    // the local minima of v^2 (1 - v) on the box sit at its ends
    CHECK((v <= 1e-3 || v >= 1 - 1e-3));

    cfg.initial = o.valuation;
    auto fixed = run_scp_regularized(m, spec, cfg);
    CHECK(fixed.iterations == 1);
    CHECK(fixed.valuation == o.valuation);
    for (const auto& r : fixed.trace) CHECK(r.tau >= cfg.beta0);
}
