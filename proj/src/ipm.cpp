#include "solver_detail.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace pmdpsyn::detail {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using RowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Idx = Eigen::Index;
using Trip = Eigen::Triplet<double>;

constexpr double kReg = 1e-9;
constexpr double kStepFraction = 0.99;
constexpr double kDivergence = 1e12;
constexpr double kPolishFrom = 1e4;  // tolerance ratio at which active-set polishing starts
constexpr int kPolishNewton = 3;

// Inequalities c(x) <= 0 with slack s > 0 and multiplier lam > 0. Rows with
// equal finite bounds and no atoms are kept as equalities instead.
struct Layout {
    std::size_t n = 0;
    RowMat A;
    std::vector<std::vector<QuadAtom>> atoms_of_row;
    std::vector<std::size_t> upper_rows;  // c = g_r - u_r
    std::vector<std::size_t> lower_rows;  // c = l_r - g_r
    std::vector<std::size_t> upper_vars;  // c = x_k - ub_k
    std::vector<std::size_t> lower_vars;  // c = lb_k - x_k
    std::vector<std::size_t> eq_rows;
    SpMat E;
    Vec b;

    std::size_t num_row_ineqs() const { return upper_rows.size() + lower_rows.size(); }
    std::size_t num_ineqs() const { return num_row_ineqs() + upper_vars.size() + lower_vars.size(); }
};

Layout make_layout(const ConvexProblem& p) {
    Layout L;
    L.n = p.num_vars;
    const std::size_t m = p.num_rows();
    std::vector<Trip> trips;
    trips.reserve(p.entries.size());
    for (const auto& e : p.entries) trips.emplace_back(static_cast<Idx>(e.row), static_cast<Idx>(e.col), e.value);
    L.A.resize(static_cast<Idx>(m), static_cast<Idx>(L.n));
    L.A.setFromTriplets(trips.begin(), trips.end());
    L.atoms_of_row.assign(m, {});
    for (const auto& ra : p.row_atoms) L.atoms_of_row[ra.row].push_back(ra.atom);

    std::vector<Trip> etrips;
    for (std::size_t r = 0; r < m; ++r) {
        double lo = p.row_lower[r], hi = p.row_upper[r];
        if (has_lo(lo) && lo == hi && L.atoms_of_row[r].empty()) {
            Idx k = static_cast<Idx>(L.eq_rows.size());
            for (RowMat::InnerIterator it(L.A, static_cast<Idx>(r)); it; ++it) etrips.emplace_back(k, it.col(), it.value());
            L.eq_rows.push_back(r);
            continue;
        }
        if (has_hi(hi)) L.upper_rows.push_back(r);
        if (has_lo(lo)) L.lower_rows.push_back(r);
    }
    L.E.resize(static_cast<Idx>(L.eq_rows.size()), static_cast<Idx>(L.n));
    L.E.setFromTriplets(etrips.begin(), etrips.end());
    L.b.resize(static_cast<Idx>(L.eq_rows.size()));
    for (std::size_t k = 0; k < L.eq_rows.size(); ++k) L.b[static_cast<Idx>(k)] = p.row_lower[L.eq_rows[k]];
    for (std::size_t j = 0; j < L.n; ++j) {
        if (has_hi(p.var_upper[j])) L.upper_vars.push_back(j);
        if (has_lo(p.var_lower[j])) L.lower_vars.push_back(j);
    }
    return L;
}

double atom_arg(const QuadAtom& a, const Vec& x) {
    return x[static_cast<Idx>(a.i)] + (a.j >= 0 ? a.sign * x[a.j] : 0.0);
}

struct Point {
    Vec x, s, lam, nu;
};

class Ipm {
public:
    Ipm(const ConvexProblem& p, const SolverSettings& st) : p_(p), st_(st), L_(make_layout(p)) {}

    SolveReport run() {
        Point pt = start();
        SolveReport rep;
        // the final steps are cheap, so aim at a tenth of the tolerance and fall
        // back to the first iterate meeting the tolerance itself when progress stops
        std::optional<SolveReport> loose;
        std::size_t loose_at = 0;
        auto finish_loose = [&](std::size_t k) {
            loose->status = SolveStatus::Optimal;
            loose->iterations = k;
            return *loose;
        };
        for (std::size_t k = 0; k <= st_.ipm_max_iter; ++k) {
            evaluate(pt);
            double tol = tolerance_ratio(pt, rep);
            if (tol <= 0.1) {
                rep.status = SolveStatus::Optimal;
                rep.iterations = k;
                return rep;
            }
            if (tol <= 1.0 && !loose) {
                loose = rep;
                loose_at = k;
            }
            if (loose && k - loose_at >= 5) return finish_loose(k);
            if (k == st_.ipm_max_iter) break;
            double rp_inf = rp_.size() > 0 ? rp_.cwiseAbs().maxCoeff() : 0.0;
            if (re_.size() > 0) rp_inf = std::max(rp_inf, re_.cwiseAbs().maxCoeff());
            if (pt.lam.size() > 0 && pt.lam.maxCoeff() > kDivergence * (1.0 + dual_scale_) && rp_inf > st_.eps_prim_inf) {
                rep.status = SolveStatus::PrimalInfeasible;
                rep.iterations = k;
                return rep;
            }
            if (tol <= kPolishFrom && polish(pt, rep)) {
                rep.iterations = k;
                return rep;
            }
            if (!step(pt)) {
                if (loose) return finish_loose(k);
                rep.status = SolveStatus::MaxIterations;
                rep.iterations = k;
                return rep;
            }
        }
        if (loose) return finish_loose(st_.ipm_max_iter);
        rep.status = SolveStatus::MaxIterations;
        rep.iterations = st_.ipm_max_iter;
        return rep;
    }

private:
    const ConvexProblem& p_;
    const SolverSettings& st_;
    Layout L_;

    // refreshed by evaluate()
    Vec c_, rd_, rp_, re_;
    SpMat J_;  // gradients of row inequalities
    double mu_ = 0.0;
    double dual_scale_ = 0.0;

    Point start() const {
        Point pt;
        pt.x = Vec::Zero(static_cast<Idx>(L_.n));
        for (std::size_t j = 0; j < L_.n; ++j) {
            double lo = p_.var_lower[j], hi = p_.var_upper[j];
            double v = 0.0;
            if (has_lo(lo) && has_hi(hi)) v = 0.5 * (lo + hi);
            else if (has_lo(lo)) v = std::max(0.0, lo + 1.0);
            else if (has_hi(hi)) v = std::min(0.0, hi - 1.0);
            pt.x[static_cast<Idx>(j)] = v;
        }
        Vec c = constraint_values(pt.x);
        pt.s = (-c).cwiseMax(1.0);
        double qs = 1.0;
        for (double v : p_.q) qs = std::max(qs, std::abs(v));
        // multipliers far below the cost scale make the first steps blow up the penalties
        pt.lam = Vec::Constant(c.size(), qs);
        pt.nu = Vec::Zero(static_cast<Idx>(L_.eq_rows.size()));
        return pt;
    }

    Vec row_values(const Vec& x) const {
        Vec g = L_.A * x;
        for (std::size_t r = 0; r < L_.atoms_of_row.size(); ++r)
            for (const auto& a : L_.atoms_of_row[r]) {
                double t = atom_arg(a, x);
                g[static_cast<Idx>(r)] += a.weight * t * t;
            }
        return g;
    }

    Vec constraint_values(const Vec& x) const {
        Vec g = row_values(x);
        Vec c(static_cast<Idx>(L_.num_ineqs()));
        Idx k = 0;
        for (auto r : L_.upper_rows) c[k++] = g[static_cast<Idx>(r)] - p_.row_upper[r];
        for (auto r : L_.lower_rows) c[k++] = p_.row_lower[r] - g[static_cast<Idx>(r)];
        for (auto j : L_.upper_vars) c[k++] = x[static_cast<Idx>(j)] - p_.var_upper[j];
        for (auto j : L_.lower_vars) c[k++] = p_.var_lower[j] - x[static_cast<Idx>(j)];
        return c;
    }

    SpMat row_jacobian(const Vec& x) const {
        std::vector<Trip> trips;
        Idx k = 0;
        for (auto r : L_.upper_rows) {
            for (RowMat::InnerIterator it(L_.A, static_cast<Idx>(r)); it; ++it) trips.emplace_back(k, it.col(), it.value());
            for (const auto& a : L_.atoms_of_row[r]) {
                double t = 2.0 * a.weight * atom_arg(a, x);
                trips.emplace_back(k, static_cast<Idx>(a.i), t);
                if (a.j >= 0) trips.emplace_back(k, a.j, t * a.sign);
            }
            ++k;
        }
        for (auto r : L_.lower_rows) {
            for (RowMat::InnerIterator it(L_.A, static_cast<Idx>(r)); it; ++it) trips.emplace_back(k, it.col(), -it.value());
            ++k;
        }
        SpMat J(static_cast<Idx>(L_.num_row_ineqs()), static_cast<Idx>(L_.n));
        J.setFromTriplets(trips.begin(), trips.end());
        return J;
    }

    // G' v for the stacked inequality gradients.
    Vec gradient_product(const Vec& v) const { return gradient_product_with(J_, v); }

    // G dx
    Vec gradient_apply(const Vec& dx) const {
        Vec out(static_cast<Idx>(L_.num_ineqs()));
        Idx nr = static_cast<Idx>(L_.num_row_ineqs());
        out.head(nr) = J_ * dx;
        Idx k = nr;
        for (auto j : L_.upper_vars) out[k++] = dx[static_cast<Idx>(j)];
        for (auto j : L_.lower_vars) out[k++] = -dx[static_cast<Idx>(j)];
        return out;
    }

    void evaluate(const Point& pt) {
        c_ = constraint_values(pt.x);
        J_ = row_jacobian(pt.x);
        std::vector<double> xs(pt.x.data(), pt.x.data() + pt.x.size());
        auto gf = objective_gradient(p_, xs);
        Vec grad = Eigen::Map<const Vec>(gf.data(), static_cast<Idx>(gf.size()));
        dual_scale_ = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
        rd_ = grad + gradient_product(pt.lam) + L_.E.transpose() * pt.nu;
        rp_ = c_ + pt.s;
        re_ = L_.E * pt.x - L_.b;
        mu_ = pt.s.size() > 0 ? pt.s.dot(pt.lam) / static_cast<double>(pt.s.size()) : 0.0;
    }

    void report(const Point& pt, SolveReport& rep) const {
        rep.x.assign(pt.x.data(), pt.x.data() + pt.x.size());
        for (std::size_t j = 0; j < L_.n; ++j) rep.x[j] = std::clamp(rep.x[j], p_.var_lower[j], p_.var_upper[j]);
        rep.y_rows.assign(p_.num_rows(), 0.0);
        rep.y_bounds.assign(L_.n, 0.0);
        Idx k = 0;
        for (auto r : L_.upper_rows) rep.y_rows[r] += pt.lam[k++];
        for (auto r : L_.lower_rows) rep.y_rows[r] -= pt.lam[k++];
        for (auto j : L_.upper_vars) rep.y_bounds[j] += pt.lam[k++];
        for (auto j : L_.lower_vars) rep.y_bounds[j] -= pt.lam[k++];
        for (std::size_t e = 0; e < L_.eq_rows.size(); ++e) rep.y_rows[L_.eq_rows[e]] = pt.nu[static_cast<Idx>(e)];
        rep.objective = p_.objective(rep.x);
        auto [pr, du] = residuals(p_, rep.x, rep.y_rows, rep.y_bounds);
        rep.primal_residual = pr;
        rep.dual_residual = du;
    }

    // largest residual relative to its tolerance; fills `rep`
    double tolerance_ratio(const Point& pt, SolveReport& rep) const {
        report(pt, rep);
        Scales sc = residual_scales(p_, rep.x, rep.y_rows, rep.y_bounds);
        return std::max(rep.primal_residual / (st_.eps_abs + st_.eps_rel * sc.primal),
                        rep.dual_residual / (st_.eps_abs + st_.eps_rel * sc.dual));
    }

    SpMat kkt_matrix(const Point& pt) const {
        const Idx n = static_cast<Idx>(L_.n);
        const Idx me = static_cast<Idx>(L_.eq_rows.size());
        const Idx nr = static_cast<Idx>(L_.num_row_ineqs());
        std::vector<Trip> trips;
        auto add_hessian = [&](const QuadAtom& a, double scale) {
            double w = 2.0 * a.weight * scale;
            Idx i = static_cast<Idx>(a.i);
            trips.emplace_back(i, i, w);
            if (a.j < 0) return;
            trips.emplace_back(a.j, a.j, w);
            trips.emplace_back(i, a.j, w * a.sign);
            trips.emplace_back(a.j, i, w * a.sign);
        };
        for (const auto& a : p_.objective_atoms) add_hessian(a, 1.0);
        for (std::size_t k = 0; k < L_.upper_rows.size(); ++k)
            for (const auto& a : L_.atoms_of_row[L_.upper_rows[k]]) add_hessian(a, pt.lam[static_cast<Idx>(k)]);
        Vec d = pt.lam.cwiseQuotient(pt.s);
        Idx k = nr;
        for (auto j : L_.upper_vars) trips.emplace_back(static_cast<Idx>(j), static_cast<Idx>(j), d[k++]);
        for (auto j : L_.lower_vars) trips.emplace_back(static_cast<Idx>(j), static_cast<Idx>(j), d[k++]);
        for (Idx j = 0; j < n; ++j) trips.emplace_back(j, j, kReg);
        for (Idx e = 0; e < me; ++e) trips.emplace_back(n + e, n + e, -kReg);
        for (Idx col = 0; col < L_.E.outerSize(); ++col)
            for (SpMat::InnerIterator it(L_.E, col); it; ++it) {
                trips.emplace_back(n + it.row(), col, it.value());
                trips.emplace_back(col, n + it.row(), it.value());
            }
        if (nr > 0) {
            SpMat JtDJ = SpMat(J_.transpose() * d.head(nr).asDiagonal() * J_);
            for (Idx col = 0; col < JtDJ.outerSize(); ++col)
                for (SpMat::InnerIterator it(JtDJ, col); it; ++it) trips.emplace_back(it.row(), col, it.value());
        }
        SpMat K(n + me, n + me);
        K.setFromTriplets(trips.begin(), trips.end());
        return K;
    }

    // Newton on the KKT system of the constraints guessed active (s < lam),
    // which settles weakly active constraints that the path approaches only linearly.
    bool polish(const Point& pt, SolveReport& rep) const {
        const Idx n = static_cast<Idx>(L_.n);
        const Idx me = static_cast<Idx>(L_.eq_rows.size());
        const Idx nr = static_cast<Idx>(L_.num_row_ineqs());
        std::vector<Idx> slot(static_cast<std::size_t>(pt.s.size()), -1);
        Idx na = 0;
        for (Idx j = 0; j < pt.s.size(); ++j)
            if (pt.s[j] < pt.lam[j]) slot[static_cast<std::size_t>(j)] = na++;
        Point cand = pt;
        for (Idx j = 0; j < pt.s.size(); ++j)
            if (slot[static_cast<std::size_t>(j)] < 0) cand.lam[j] = 0.0;

        for (int it = 0; it < kPolishNewton; ++it) {
            SpMat J = row_jacobian(cand.x);
            Vec c = constraint_values(cand.x);
            std::vector<double> xs(cand.x.data(), cand.x.data() + n);
            auto gf = objective_gradient(p_, xs);
            Vec grad = Eigen::Map<const Vec>(gf.data(), n);

            std::vector<Trip> trips;
            auto add_hessian = [&](const QuadAtom& a, double scale) {
                double w = 2.0 * a.weight * scale;
                Idx i = static_cast<Idx>(a.i);
                trips.emplace_back(i, i, w);
                if (a.j < 0) return;
                trips.emplace_back(a.j, a.j, w);
                trips.emplace_back(i, a.j, w * a.sign);
                trips.emplace_back(a.j, i, w * a.sign);
            };
            for (const auto& a : p_.objective_atoms) add_hessian(a, 1.0);
            for (std::size_t k = 0; k < L_.upper_rows.size(); ++k)
                if (slot[k] >= 0)
                    for (const auto& a : L_.atoms_of_row[L_.upper_rows[k]]) add_hessian(a, cand.lam[static_cast<Idx>(k)]);
            for (Idx j = 0; j < n; ++j) trips.emplace_back(j, j, kReg);
            Vec rhs = Vec::Zero(n + na + me);
            rhs.head(n) = -(grad + gradient_product_with(J, cand.lam) + L_.E.transpose() * cand.nu);
            for (Idx col = 0; col < J.outerSize(); ++col)
                for (SpMat::InnerIterator e(J, col); e; ++e) {
                    Idx a = slot[static_cast<std::size_t>(e.row())];
                    if (a < 0) continue;
                    trips.emplace_back(n + a, col, e.value());
                    trips.emplace_back(col, n + a, e.value());
                }
            Idx k = nr;
            for (auto v : L_.upper_vars) {
                Idx a = slot[static_cast<std::size_t>(k++)];
                if (a < 0) continue;
                trips.emplace_back(n + a, static_cast<Idx>(v), 1.0);
                trips.emplace_back(static_cast<Idx>(v), n + a, 1.0);
            }
            for (auto v : L_.lower_vars) {
                Idx a = slot[static_cast<std::size_t>(k++)];
                if (a < 0) continue;
                trips.emplace_back(n + a, static_cast<Idx>(v), -1.0);
                trips.emplace_back(static_cast<Idx>(v), n + a, -1.0);
            }
            for (Idx j = 0; j < static_cast<Idx>(slot.size()); ++j)
                if (slot[static_cast<std::size_t>(j)] >= 0) rhs[n + slot[static_cast<std::size_t>(j)]] = -c[j];
            for (Idx e = 0; e < L_.E.outerSize(); ++e)
                for (SpMat::InnerIterator it2(L_.E, e); it2; ++it2) {
                    trips.emplace_back(n + na + it2.row(), e, it2.value());
                    trips.emplace_back(e, n + na + it2.row(), it2.value());
                }
            for (Idx r = 0; r < na + me; ++r) trips.emplace_back(n + r, n + r, -kReg);
            rhs.tail(me) = -(L_.E * cand.x - L_.b);

            SpMat K(n + na + me, n + na + me);
            K.setFromTriplets(trips.begin(), trips.end());
            Eigen::SimplicialLDLT<SpMat> ldlt(K);
            if (ldlt.info() != Eigen::Success) return false;
            Vec z = ldlt.solve(rhs);
            for (int r = 0; r < 2; ++r) {
                Vec res = rhs - K * z;
                res.head(n) += kReg * z.head(n);
                res.tail(na + me) -= kReg * z.tail(na + me);
                z += ldlt.solve(res);
            }
            if (!z.allFinite()) return false;
            cand.x += z.head(n);
            for (Idx j = 0; j < static_cast<Idx>(slot.size()); ++j)
                if (slot[static_cast<std::size_t>(j)] >= 0) cand.lam[j] += z[n + slot[static_cast<std::size_t>(j)]];
            cand.nu += z.tail(me);
        }
        SolveReport trial;
        if (tolerance_ratio(cand, trial) > 1.0) return false;
        rep = trial;
        rep.status = SolveStatus::Optimal;
        return true;
    }

    Vec gradient_product_with(const SpMat& J, const Vec& v) const {
        Idx nr = static_cast<Idx>(L_.num_row_ineqs());
        Vec out = J.transpose() * v.head(nr);
        Idx k = nr;
        for (auto j : L_.upper_vars) out[static_cast<Idx>(j)] += v[k++];
        for (auto j : L_.lower_vars) out[static_cast<Idx>(j)] -= v[k++];
        return out;
    }

    struct Direction {
        Vec dx, ds, dlam, dnu;
    };

    template <class Solver>
    Direction direction(const Solver& ldlt, const SpMat& K, const Point& pt, const Vec& rc) const {
        const Idx n = static_cast<Idx>(L_.n);
        const Idx me = static_cast<Idx>(L_.eq_rows.size());
        Vec w = pt.lam.cwiseQuotient(pt.s).cwiseProduct(rp_) - rc.cwiseQuotient(pt.s);
        Vec rhs(n + me);
        rhs.head(n) = -rd_ - gradient_product(w);
        rhs.tail(me) = -re_;
        Vec z = ldlt.solve(rhs);
        // refine against the unregularized system
        for (int r = 0; r < 2; ++r) {
            Vec res = rhs - K * z;
            res.head(n) += kReg * z.head(n);
            res.tail(me) -= kReg * z.tail(me);
            z += ldlt.solve(res);
        }
        Direction dir;
        dir.dx = z.head(n);
        dir.dnu = z.tail(me);
        dir.ds = -rp_ - gradient_apply(dir.dx);
        dir.dlam = (-rc - pt.lam.cwiseProduct(dir.ds)).cwiseQuotient(pt.s);
        return dir;
    }

    static double max_step(const Vec& v, const Vec& dv) {
        double a = std::numeric_limits<double>::infinity();
        for (Idx i = 0; i < v.size(); ++i)
            if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
        return a;
    }

    bool step(Point& pt) {
        SpMat K = kkt_matrix(pt);
        Eigen::SimplicialLDLT<SpMat> ldlt(K);
        if (ldlt.info() != Eigen::Success) return false;

        Vec rc = pt.s.cwiseProduct(pt.lam);
        Direction aff = direction(ldlt, K, pt, rc);
        double a_aff = std::min({1.0, max_step(pt.s, aff.ds), max_step(pt.lam, aff.dlam)});
        double sigma = 0.0;
        if (pt.s.size() > 0 && mu_ > 0.0) {
            double mu_aff = (pt.s + a_aff * aff.ds).dot(pt.lam + a_aff * aff.dlam) / static_cast<double>(pt.s.size());
            sigma = std::pow(std::clamp(mu_aff / mu_, 0.0, 1.0), 3);
        }
        rc += aff.ds.cwiseProduct(aff.dlam) - Vec::Constant(rc.size(), sigma * mu_);
        Direction dir = direction(ldlt, K, pt, rc);
        double a = std::min(1.0, kStepFraction * std::min(max_step(pt.s, dir.ds), max_step(pt.lam, dir.dlam)));
        if (!dir.dx.allFinite() || !dir.dlam.allFinite()) return false;
        pt.x += a * dir.dx;
        pt.s += a * dir.ds;
        pt.lam += a * dir.dlam;
        pt.nu += a * dir.dnu;
        pt.s = pt.s.cwiseMax(1e-300);
        pt.lam = pt.lam.cwiseMax(1e-300);
        return true;
    }
};

}  // namespace

SolveReport solve_interior_point(const ConvexProblem& problem, const SolverSettings& settings) {
    Ipm ipm(problem, settings);
    return ipm.run();
}

}  // namespace pmdpsyn::detail
