#include <doctest.h>

#include "../support/oracles.hpp"
#include "pmdpsyn/errors.hpp"
#include "pmdpsyn/solver.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

using namespace pmdpsyn;

namespace {

// min x^2 s.t. x >= 1, as a row
ConvexProblem square_above_one() {
    ConvexProblem p;
    p.add_var(-kInf, kInf);
    p.objective_atoms.push_back({1.0, 0, -1, 1.0});
    p.add_row(1.0, kInf);
    p.add_entry(0, 0, 1.0);
    return p;
}

std::vector<SolverSettings> both_methods() {
    SolverSettings admm, ipm;
    ipm.method = SolverMethod::InteriorPoint;
    return {admm, ipm};
}

}  // namespace

TEST_CASE("min x^2 subject to x >= 1") {
    for (const auto& st : both_methods()) {
        CAPTURE(std::string(to_string(st.method)));
        auto rep = solve(square_above_one());
        REQUIRE(rep.status == SolveStatus::Optimal);
        CHECK(rep.x[0] == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(rep.objective == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(rep.y_rows[0] == doctest::Approx(-2.0).epsilon(1e-7));
        CHECK(rep.primal_residual <= 1e-8);
        CHECK(rep.dual_residual <= 1e-8);

        ConvexProblem b;
        b.add_var(1.0, kInf);
        b.objective_atoms.push_back({1.0, 0, -1, 1.0});
        auto rb = solve(b, st);
        REQUIRE(rb.status == SolveStatus::Optimal);
        CHECK(rb.x[0] == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("LP optimum on a face") {
    for (const auto& st : both_methods()) {
        CAPTURE(std::string(to_string(st.method)));
        ConvexProblem p;
        p.add_var(0.0, kInf, 1.0);
        p.add_var(0.0, kInf, 1.0);
        p.add_row(2.0, kInf);
        p.add_entry(0, 0, 1.0);
        p.add_entry(0, 1, 1.0);
        auto rep = solve(p, st);
        REQUIRE(rep.status == SolveStatus::Optimal);
        CHECK(rep.objective == doctest::Approx(2.0).epsilon(1e-9));
        CHECK(rep.primal_residual <= 1e-8);
        CHECK(rep.dual_residual <= 1e-8);
    }
}

TEST_CASE("residuals of hand-made candidates") {
    auto p = square_above_one();
    auto [p0, d0] = residuals(p, {1.0}, {-2.0}, {0.0});
    CHECK(p0 <= 1e-10);
    CHECK(d0 <= 1e-10);
    auto [p1, d1] = residuals(p, {1.1}, {-2.0}, {0.0});
    CHECK(p1 == doctest::Approx(0.0));
    CHECK(d1 == doctest::Approx(0.2).epsilon(1e-12));
    auto [p2, d2] = residuals(p, {0.5}, {0.0}, {0.0});
    CHECK(p2 == doctest::Approx(0.5).epsilon(1e-12));
    (void)d2;
    CHECK_THROWS_AS(residuals(p, {0.5, 1.0}, {0.0}, {0.0}), ShapeMismatch);
}

TEST_CASE("random QPs match active-set enumeration") {
    for (const auto& st : both_methods()) {
        CAPTURE(std::string(to_string(st.method)));
        std::mt19937_64 rng(7);
        std::uniform_int_distribution<std::size_t> N(1, 10), M(0, 15);
        int checked = 0;
        for (int k = 0; k < 60; ++k) {
            std::size_t n = N(rng), m = M(rng);
            auto p = testsupport::random_qp(rng, n, m);
            auto oracle = testsupport::active_set_objective(p);
            REQUIRE(oracle.has_value());
            auto rep = solve(p, st);
            INFO("instance " << k << " n=" << n << " m=" << m);
            REQUIRE(rep.status == SolveStatus::Optimal);
            CHECK(std::abs(rep.objective - *oracle) <= 1e-6);
            CHECK(rep.primal_residual <= 1e-8);
            CHECK(rep.dual_residual <= 1e-8);
            ++checked;
        }
        CHECK(checked == 60);
    }
}

TEST_CASE("random LPs match vertex enumeration") {
    for (const auto& st : both_methods()) {
        CAPTURE(std::string(to_string(st.method)));
        std::mt19937_64 rng(11);
        std::uniform_int_distribution<std::size_t> N(1, 5), M(0, 6);
        for (int k = 0; k < 40; ++k) {
            std::size_t n = N(rng), m = M(rng);
            auto p = testsupport::random_lp(rng, n, m);
            auto oracle = testsupport::active_set_objective(p);
            REQUIRE(oracle.has_value());
            auto rep = solve(p, st);
            INFO("instance " << k << " n=" << n << " m=" << m);
            REQUIRE(rep.status == SolveStatus::Optimal);
            CHECK(std::abs(rep.objective - *oracle) <= 1e-6);
            CHECK(rep.primal_residual <= 1e-8);
            CHECK(rep.dual_residual <= 1e-8);
        }
    }
}

TEST_CASE("infeasible problems are certified") {
    for (const auto& st : both_methods()) {
        CAPTURE(std::string(to_string(st.method)));
        ConvexProblem p;
        p.add_var(-kInf, kInf, 1.0);
        p.add_row(2.0, kInf);
        p.add_entry(0, 0, 1.0);
        p.add_row(-kInf, 1.0);
        p.add_entry(1, 0, 1.0);
        CHECK(solve(p, st).status == SolveStatus::PrimalInfeasible);

        // x^2 <= 1 and x >= 2
        ConvexProblem c;
        c.add_var(2.0, kInf, 0.0);
        c.add_row(-kInf, 1.0);
        c.row_atoms.push_back({0, {1.0, 0, -1, 1.0}});
        CHECK(solve(c, st).status == SolveStatus::PrimalInfeasible);
    }
}

TEST_CASE("quadratic rows") {
    for (const auto& st : both_methods()) {
        CAPTURE(std::string(to_string(st.method)));
        // max x s.t. x^2 <= 4
        ConvexProblem p;
        p.add_var(-kInf, kInf, -1.0);
        p.add_row(-kInf, 4.0);
        p.row_atoms.push_back({0, {1.0, 0, -1, 1.0}});
        auto rep = solve(p, st);
        REQUIRE(rep.status == SolveStatus::Optimal);
        CHECK(rep.x[0] == doctest::Approx(2.0).epsilon(1e-9));
        CHECK(rep.primal_residual <= 1e-8);
        CHECK(rep.dual_residual <= 1e-8);

        // max x + y s.t. x^2 + y^2 <= 1
        ConvexProblem d;
        d.add_var(-kInf, kInf, -1.0);
        d.add_var(-kInf, kInf, -1.0);
        d.add_row(-kInf, 1.0);
        d.row_atoms.push_back({0, {1.0, 0, -1, 1.0}});
        d.row_atoms.push_back({0, {1.0, 1, -1, 1.0}});
        auto rd = solve(d, st);
        REQUIRE(rd.status == SolveStatus::Optimal);
        CHECK(rd.objective == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-9));

        // min y - x s.t. 0.5 (x - y)^2 + y - 2 <= 0, x in [0, 3], y >= 0
        ConvexProblem e;
        e.add_var(0.0, 3.0, -1.0);
        e.add_var(0.0, kInf, 1.0);
        e.add_row(-kInf, 2.0);
        e.add_entry(0, 1, 1.0);
        e.row_atoms.push_back({0, {0.5, 0, 1, -1.0}});
        auto re = solve(e, st);
        REQUIRE(re.status == SolveStatus::Optimal);
        CHECK(re.primal_residual <= 1e-8);
        CHECK(re.dual_residual <= 1e-8);
        // on the boundary x = y + sqrt(2 (2 - y)), so y - x is smallest at y = 0
        CHECK(re.x[0] == doctest::Approx(2.0).epsilon(1e-8));
        CHECK(std::abs(re.x[1]) <= 1e-8);
        CHECK(re.objective == doctest::Approx(-2.0).epsilon(1e-9));
    }
}

TEST_CASE("parabola projection") {
    auto [u0, t0] = project_parabola(0.5, 1.0, 1.0);
    CHECK(u0 == 0.5);
    CHECK(t0 == 1.0);
    auto [u1, t1] = project_parabola(2.0, 0.0, 1.0);
    CHECK(t1 == doctest::Approx(u1 * u1));
    // optimality: the residual is normal to the parabola
    double nu = u1 - 2.0, nt = t1 - 0.0;
    CHECK(nu * 1.0 + nt * 2.0 * u1 == doctest::Approx(0.0).epsilon(1e-12));
    auto [u2, t2] = project_parabola(0.0, -3.0, 2.0);
    CHECK(u2 == 0.0);
    CHECK(t2 == 0.0);
    auto [u3, t3] = project_parabola(-1.0, 0.2, 3.0);
    CHECK(u3 < 0.0);
    CHECK(t3 == doctest::Approx(3.0 * u3 * u3));
}

TEST_CASE("deterministic reports") {
    std::mt19937_64 rng(3);
    auto p = testsupport::random_qp(rng, 6, 8);
    auto a = solve(p);
    auto b = solve(p);
    CHECK(a.x == b.x);
    CHECK(a.y_rows == b.y_rows);
    CHECK(a.iterations == b.iterations);
    auto ws = a.warm_start();
    auto c = solve(p, {}, &ws);
    auto d = solve(p, {}, &ws);
    CHECK(c.x == d.x);
    CHECK(c.iterations <= a.iterations);
}

TEST_CASE("argmin is invariant under objective scaling") {
    for (const auto& st : both_methods()) {
        CAPTURE(std::string(to_string(st.method)));
        std::mt19937_64 rng(5);
        for (int k = 0; k < 10; ++k) {
            auto p = testsupport::random_qp(rng, 5, 6);
            auto s = p;
            for (auto& v : s.q) v *= 10.0;
            for (auto& a : s.objective_atoms) a.weight *= 10.0;
            auto a = solve(p, st);
            auto b = solve(s, st);
            REQUIRE(a.status == SolveStatus::Optimal);
            REQUIRE(b.status == SolveStatus::Optimal);
            for (std::size_t j = 0; j < a.x.size(); ++j) CHECK(std::abs(a.x[j] - b.x[j]) <= 1e-7);
        }
    }
}

TEST_CASE("dump and load reproduce the problem") {
    std::mt19937_64 rng(9);
    auto p = testsupport::random_qp(rng, 4, 5);
    p.var_lower[1] = -2.5;
    p.row_atoms.push_back({p.add_row(-kInf, 3.0), {0.25, 2, 3, -1.0}});
    auto text = dump_problem(p);
    auto back = load_problem(text);
    CHECK(back == p);
    CHECK(dump_problem(back) == text);
    CHECK_THROWS_AS(load_problem("convex-problem\nvars x\n"), ParseError);
}

TEST_CASE("validation rejects malformed problems") {
    ConvexProblem p;
    p.add_var(1.0, 0.0);
    CHECK_THROWS(p.validate());
    ConvexProblem r;
    r.add_var(0.0, 1.0);
    r.add_row(0.0, 1.0);
    r.row_atoms.push_back({0, {1.0, 0, -1, 1.0}});
    CHECK_THROWS(r.validate());
    ConvexProblem s;
    s.add_var(0.0, 1.0);
    s.add_entry(3, 0, 1.0);
    CHECK_THROWS_AS(s.validate(), ShapeMismatch);
}
