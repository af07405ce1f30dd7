#include "oracles.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace testsupport {

using pmdpsyn::ConvexProblem;

namespace {

struct Half {
    Eigen::VectorXd a;
    double b;  // a'x <= b
};

std::vector<Half> halfspaces(const ConvexProblem& p) {
    std::size_t n = p.num_vars;
    std::vector<Eigen::VectorXd> rows(p.num_rows(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)));
    for (const auto& e : p.entries) rows[e.row][static_cast<Eigen::Index>(e.col)] += e.value;
    std::vector<Half> out;
    for (std::size_t r = 0; r < p.num_rows(); ++r) {
        if (std::isfinite(p.row_upper[r])) out.push_back({rows[r], p.row_upper[r]});
        if (std::isfinite(p.row_lower[r])) out.push_back({-rows[r], -p.row_lower[r]});
    }
    for (std::size_t j = 0; j < n; ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        e[static_cast<Eigen::Index>(j)] = 1.0;
        if (std::isfinite(p.var_upper[j])) out.push_back({e, p.var_upper[j]});
        if (std::isfinite(p.var_lower[j])) out.push_back({-e, -p.var_lower[j]});
    }
    return out;
}

}  // namespace

std::optional<double> active_set_objective(const ConvexProblem& p) {
    auto n = static_cast<Eigen::Index>(p.num_vars);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (const auto& a : p.objective_atoms) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
        v[static_cast<Eigen::Index>(a.i)] += 1.0;
        if (a.j >= 0) v[a.j] += a.sign;
        P += 2.0 * a.weight * v * v.transpose();
    }
    Eigen::VectorXd q(n);
    for (Eigen::Index j = 0; j < n; ++j) q[j] = p.q[static_cast<std::size_t>(j)];
    auto hs = halfspaces(p);
    std::size_t H = hs.size();
    std::optional<double> best;
    std::vector<std::size_t> subset;
    auto consider = [&]() {
        auto k = static_cast<Eigen::Index>(subset.size());
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + k);
        K.topLeftCorner(n, n) = P;
        rhs.head(n) = -q;
        for (Eigen::Index i = 0; i < k; ++i) {
            const auto& h = hs[subset[static_cast<std::size_t>(i)]];
            K.block(n + i, 0, 1, n) = h.a.transpose();
            K.block(0, n + i, n, 1) = h.a;
            rhs[n + i] = h.b;
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
        if (!lu.isInvertible()) return;
        Eigen::VectorXd sol = lu.solve(rhs);
        Eigen::VectorXd x = sol.head(n);
        for (const auto& h : hs)
            if (h.a.dot(x) > h.b + 1e-9 * (1.0 + std::abs(h.b))) return;
        std::vector<double> xv(x.data(), x.data() + n);
        double f = p.objective(xv);
        if (!best || f < *best) best = f;
    };
    // depth-first over subsets of size <= n
    std::vector<std::size_t> stack;
    auto rec = [&](auto&& self, std::size_t start) -> void {
        consider();
        if (subset.size() == static_cast<std::size_t>(n)) return;
        for (std::size_t i = start; i < H; ++i) {
            subset.push_back(i);
            self(self, i + 1);
            subset.pop_back();
        }
    };
    rec(rec, 0);
    return best;
}

ConvexProblem random_qp(std::mt19937_64& rng, std::size_t n, std::size_t m) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::uniform_real_distribution<double> W(0.1, 2.0);
    std::uniform_int_distribution<std::size_t> V(0, n - 1);
    ConvexProblem p;
    for (std::size_t j = 0; j < n; ++j) p.add_var(-pmdpsyn::kInf, pmdpsyn::kInf, 3.0 * U(rng));
    for (std::size_t j = 0; j < n; ++j) p.objective_atoms.push_back({W(rng), j, -1, 1.0});
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t i = V(rng), j = V(rng);
        if (i == j) continue;
        p.objective_atoms.push_back({W(rng), i, static_cast<std::ptrdiff_t>(j), U(rng) < 0 ? -1.0 : 1.0});
    }
    std::vector<double> x0(n);
    for (auto& v : x0) v = U(rng);
    std::bernoulli_distribution tight(0.3);
    for (std::size_t r = 0; r < m; ++r) {
        double ax = 0.0;
        std::size_t row = p.num_rows();
        for (std::size_t j = 0; j < n; ++j) {
            if (U(rng) < 0.0) continue;
            double a = U(rng);
            p.add_entry(row, j, a);
            ax += a * x0[j];
        }
        double slack = tight(rng) ? 0.0 : 0.5 * W(rng);
        if (U(rng) < 0.0)
            p.add_row(-pmdpsyn::kInf, ax + slack);
        else
            p.add_row(ax - slack, pmdpsyn::kInf);
    }
    return p;
}

ConvexProblem random_lp(std::mt19937_64& rng, std::size_t n, std::size_t m) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    ConvexProblem p;
    for (std::size_t j = 0; j < n; ++j) p.add_var(-1.0 - 0.5 * std::abs(U(rng)), 1.0 + 0.5 * std::abs(U(rng)), U(rng));
    for (std::size_t r = 0; r < m; ++r) {
        std::size_t row = p.num_rows();
        for (std::size_t j = 0; j < n; ++j) p.add_entry(row, j, U(rng));
        // the origin stays feasible
        double b = 0.2 + std::abs(U(rng));
        p.add_row(U(rng) < -0.5 ? -b : -pmdpsyn::kInf, b);
    }
    return p;
}

std::vector<double> fig2_level_set(double c) {
    auto f = [c](double v) { return v * v * (1.0 - v) - c; };
    auto bisect = [&](double lo, double hi) {
        for (int i = 0; i < 200; ++i) {
            double mid = 0.5 * (lo + hi);
            if ((f(lo) < 0) == (f(mid) < 0))
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    };
    std::vector<double> roots;
    // f increases on [0, 2/3] and decreases on [2/3, 1]
    const double peak = 2.0 / 3.0;
    if (f(peak) < 0) return roots;
    if (f(0.0) <= 0) roots.push_back(bisect(0.0, peak));
    if (f(1.0) <= 0) roots.push_back(bisect(peak, 1.0));
    return roots;
}

}  // namespace testsupport
