#include "pmdpsyn/solver.hpp"

#include "pmdpsyn/errors.hpp"
#include "solver_detail.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>

namespace pmdpsyn {

std::size_t ConvexProblem::add_var(double lo, double hi, double cost) {
    var_lower.push_back(lo);
    var_upper.push_back(hi);
    q.push_back(cost);
    return num_vars++;
}

std::size_t ConvexProblem::add_row(double lo, double hi) {
    row_lower.push_back(lo);
    row_upper.push_back(hi);
    return row_lower.size() - 1;
}

double ConvexProblem::objective(const std::vector<double>& x) const {
    double f = objective_constant;
    for (std::size_t j = 0; j < num_vars; ++j) f += q[j] * x[j];
    for (const auto& a : objective_atoms) f += a.value(x);
    return f;
}

std::vector<double> ConvexProblem::row_values(const std::vector<double>& x) const {
    std::vector<double> g(num_rows(), 0.0);
    for (const auto& e : entries) g[e.row] += e.value * x[e.col];
    for (const auto& ra : row_atoms) g[ra.row] += ra.atom.value(x);
    return g;
}

void ConvexProblem::validate() const {
    if (q.size() != num_vars || var_lower.size() != num_vars || var_upper.size() != num_vars)
        throw ShapeMismatch("variable arrays do not match num_vars");
    if (row_upper.size() != row_lower.size()) throw ShapeMismatch("row bound arrays differ in length");
    auto check_atom = [&](const QuadAtom& a) {
        if (a.i >= num_vars || (a.j >= 0 && static_cast<std::size_t>(a.j) >= num_vars))
            throw ShapeMismatch("quadratic atom refers to a missing variable");
        if (!(a.weight >= 0.0) || !std::isfinite(a.weight)) throw std::invalid_argument("quadratic atom weight must be >= 0");
    };
    for (const auto& a : objective_atoms) check_atom(a);
    for (const auto& ra : row_atoms) {
        check_atom(ra.atom);
        if (ra.row >= num_rows()) throw ShapeMismatch("row atom refers to a missing row");
        if (!(ra.atom.weight > 0.0)) throw std::invalid_argument("row atom weight must be positive");
        if (row_lower[ra.row] != -kInf) throw std::invalid_argument("rows with quadratic atoms admit only an upper bound");
    }
    for (const auto& e : entries) {
        if (e.row >= num_rows() || e.col >= num_vars) throw ShapeMismatch("constraint entry out of range");
        if (!std::isfinite(e.value)) throw std::invalid_argument("non-finite constraint coefficient");
    }
    for (std::size_t j = 0; j < num_vars; ++j)
        if (!(var_lower[j] <= var_upper[j])) throw std::invalid_argument("variable lower bound exceeds upper bound");
    for (std::size_t r = 0; r < num_rows(); ++r)
        if (!(row_lower[r] <= row_upper[r])) throw std::invalid_argument("row lower bound exceeds upper bound");
}

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::PrimalInfeasible: return "primal_infeasible";
        case SolveStatus::MaxIterations: return "max_iterations";
    }
    return "unknown";
}

const char* to_string(SolverMethod m) {
    return m == SolverMethod::Admm ? "admm" : "interior_point";
}

namespace detail {

std::vector<double> objective_gradient(const ConvexProblem& p, const std::vector<double>& x) {
    std::vector<double> g = p.q;
    for (const auto& a : p.objective_atoms) {
        double s = x[a.i] + (a.j >= 0 ? a.sign * x[static_cast<std::size_t>(a.j)] : 0.0);
        g[a.i] += 2.0 * a.weight * s;
        if (a.j >= 0) g[static_cast<std::size_t>(a.j)] += 2.0 * a.weight * s * a.sign;
    }
    return g;
}

double complementarity(double y, double value, double lo, double hi) {
    if (y < 0.0) return has_lo(lo) ? std::min(-y, std::abs(value - lo)) : -y;
    if (y > 0.0) return has_hi(hi) ? std::min(y, std::abs(hi - value)) : y;
    return 0.0;
}

// Magnitudes entering the relative part of the stopping tolerances.
Scales residual_scales(const ConvexProblem& p, const std::vector<double>& x, const std::vector<double>& y_rows,
                       const std::vector<double>& y_bounds) {
    Scales s;
    auto g = p.row_values(x);
    for (double v : g) s.primal = std::max(s.primal, std::abs(v));
    for (double v : x) s.primal = std::max(s.primal, std::abs(v));
    auto grad = objective_gradient(p, x);
    for (double v : grad) s.dual = std::max(s.dual, std::abs(v));
    for (double v : p.q) s.dual = std::max(s.dual, std::abs(v));
    std::vector<double> aty(p.num_vars, 0.0);
    for (const auto& e : p.entries) aty[e.col] += e.value * y_rows[e.row];
    for (std::size_t j = 0; j < p.num_vars; ++j) s.dual = std::max(s.dual, std::abs(aty[j] + y_bounds[j]));
    return s;
}

}  // namespace detail

namespace {

using namespace detail;

using SpMat = Eigen::SparseMatrix<double>;
using RowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Idx = Eigen::Index;
using Trip = Eigen::Triplet<double>;

struct Cone {
    Idx row_u = 0;
    Idx row_t = 0;
    double weight = 0.0;
};

// The problem with every row atom replaced by an epigraph variable t and a
// parabolic cone {(u, t) : t >= w u^2}; variable bounds become rows.
struct Lifted {
    Idx n = 0;
    Idx m = 0;
    std::size_t n_orig = 0;
    std::size_t m_orig = 0;
    SpMat P;
    SpMat A;
    Vec q;
    Vec l;
    Vec u;
    std::vector<Cone> cones;
    std::vector<int> cone_of_row;
    Idx bound_row0 = 0;
    std::vector<std::size_t> bound_var;
};

Lifted lift(const ConvexProblem& p) {
    Lifted L;
    L.n_orig = p.num_vars;
    L.m_orig = p.num_rows();
    std::size_t k_atoms = p.row_atoms.size();
    L.n = static_cast<Idx>(p.num_vars + k_atoms);
    Idx cone0 = static_cast<Idx>(L.m_orig);
    L.bound_row0 = cone0 + static_cast<Idx>(2 * k_atoms);
    for (std::size_t j = 0; j < p.num_vars; ++j)
        if (has_lo(p.var_lower[j]) || has_hi(p.var_upper[j])) L.bound_var.push_back(j);
    L.m = L.bound_row0 + static_cast<Idx>(L.bound_var.size());

    std::vector<Trip> at;
    at.reserve(p.entries.size() + 4 * k_atoms + L.bound_var.size());
    for (const auto& e : p.entries) at.emplace_back(static_cast<Idx>(e.row), static_cast<Idx>(e.col), e.value);
    L.cone_of_row.assign(static_cast<std::size_t>(L.m), -1);
    for (std::size_t k = 0; k < k_atoms; ++k) {
        const auto& ra = p.row_atoms[k];
        Idx t = static_cast<Idx>(p.num_vars + k);
        Idx ru = cone0 + static_cast<Idx>(2 * k);
        at.emplace_back(static_cast<Idx>(ra.row), t, 1.0);
        at.emplace_back(ru, static_cast<Idx>(ra.atom.i), 1.0);
        if (ra.atom.j >= 0) at.emplace_back(ru, static_cast<Idx>(ra.atom.j), ra.atom.sign);
        at.emplace_back(ru + 1, t, 1.0);
        L.cones.push_back({ru, ru + 1, ra.atom.weight});
        L.cone_of_row[static_cast<std::size_t>(ru)] = static_cast<int>(k);
        L.cone_of_row[static_cast<std::size_t>(ru + 1)] = static_cast<int>(k);
    }
    for (std::size_t b = 0; b < L.bound_var.size(); ++b)
        at.emplace_back(L.bound_row0 + static_cast<Idx>(b), static_cast<Idx>(L.bound_var[b]), 1.0);
    L.A.resize(L.m, L.n);
    L.A.setFromTriplets(at.begin(), at.end());
    L.A.prune(0.0);

    std::vector<Trip> pt;
    for (const auto& a : p.objective_atoms) {
        if (a.weight == 0.0) continue;
        double w2 = 2.0 * a.weight;
        Idx i = static_cast<Idx>(a.i);
        pt.emplace_back(i, i, w2);
        if (a.j >= 0) {
            Idx j = static_cast<Idx>(a.j);
            pt.emplace_back(j, j, w2 * a.sign * a.sign);
            pt.emplace_back(i, j, w2 * a.sign);
            pt.emplace_back(j, i, w2 * a.sign);
        }
    }
    L.P.resize(L.n, L.n);
    L.P.setFromTriplets(pt.begin(), pt.end());
    L.P.prune(0.0);

    L.q = Vec::Zero(L.n);
    for (std::size_t j = 0; j < p.num_vars; ++j) L.q[static_cast<Idx>(j)] = p.q[j];
    L.l = Vec::Constant(L.m, -kInf);
    L.u = Vec::Constant(L.m, kInf);
    for (std::size_t r = 0; r < L.m_orig; ++r) {
        L.l[static_cast<Idx>(r)] = has_lo(p.row_lower[r]) ? p.row_lower[r] : -kInf;
        L.u[static_cast<Idx>(r)] = has_hi(p.row_upper[r]) ? p.row_upper[r] : kInf;
    }
    for (std::size_t b = 0; b < L.bound_var.size(); ++b) {
        std::size_t j = L.bound_var[b];
        L.l[L.bound_row0 + static_cast<Idx>(b)] = has_lo(p.var_lower[j]) ? p.var_lower[j] : -kInf;
        L.u[L.bound_row0 + static_cast<Idx>(b)] = has_hi(p.var_upper[j]) ? p.var_upper[j] : kInf;
    }
    return L;
}

struct Scaled {
    SpMat P;
    SpMat A;
    Vec q;
    Vec l;
    Vec u;
    std::vector<double> weight;  // per cone
    Vec D;
    Vec E;
    double c = 1.0;
};

double clip_norm(double v) {
    if (v < 1e-4) return 1.0;
    return std::min(v, 1e4);
}

Scaled equilibrate(const Lifted& L, int iters) {
    Scaled S;
    S.P = L.P;
    S.A = L.A;
    S.q = L.q;
    S.D = Vec::Ones(L.n);
    S.E = Vec::Ones(L.m);
    for (int it = 0; it < iters; ++it) {
        Vec col = Vec::Zero(L.n);
        Vec row = Vec::Zero(L.m);
        for (Idx j = 0; j < S.P.outerSize(); ++j)
            for (SpMat::InnerIterator i(S.P, j); i; ++i) col[j] = std::max(col[j], std::abs(i.value()));
        for (Idx j = 0; j < S.A.outerSize(); ++j)
            for (SpMat::InnerIterator i(S.A, j); i; ++i) {
                double a = std::abs(i.value());
                col[j] = std::max(col[j], a);
                row[i.row()] = std::max(row[i.row()], a);
            }
        Vec dv(L.n), dr(L.m);
        for (Idx j = 0; j < L.n; ++j) dv[j] = 1.0 / std::sqrt(clip_norm(col[j]));
        for (Idx i = 0; i < L.m; ++i) dr[i] = 1.0 / std::sqrt(clip_norm(row[i]));
        S.P = dv.asDiagonal() * S.P * dv.asDiagonal();
        S.A = dr.asDiagonal() * S.A * dv.asDiagonal();
        S.q = dv.cwiseProduct(S.q);
        S.D = S.D.cwiseProduct(dv);
        S.E = S.E.cwiseProduct(dr);
    }
    double mean_col = 0.0;
    if (L.n > 0) {
        for (Idx j = 0; j < S.P.outerSize(); ++j) {
            double cm = 0.0;
            for (SpMat::InnerIterator i(S.P, j); i; ++i) cm = std::max(cm, std::abs(i.value()));
            mean_col += cm;
        }
        mean_col /= static_cast<double>(L.n);
    }
    double qn = S.q.size() ? S.q.cwiseAbs().maxCoeff() : 0.0;
    double cs = std::max(mean_col, qn);
    S.c = cs < 1e-4 ? 1.0 : 1.0 / std::min(cs, 1e4);
    S.P *= S.c;
    S.q *= S.c;
    S.l = S.E.cwiseProduct(L.l);
    S.u = S.E.cwiseProduct(L.u);
    for (const auto& cn : L.cones) S.weight.push_back(cn.weight * S.E[cn.row_t] / (S.E[cn.row_u] * S.E[cn.row_u]));
    return S;
}

}  // namespace

std::pair<double, double> project_parabola(double a, double t, double w) {
    if (t >= w * a * a) return {a, t};
    double mag = std::abs(a);
    if (mag == 0.0) return {0.0, std::max(t, 0.0)};
    double k = 1.0 - 2.0 * w * t;
    auto f = [&](double s) { return 2.0 * w * w * s * s * s + k * s - mag; };
    double lo = 0.0, hi = mag, s = mag;
    for (int it = 0; it < 200; ++it) {
        double fs = f(s);
        if (fs > 0.0)
            hi = s;
        else
            lo = s;
        double d = 6.0 * w * w * s * s + k;
        double next = d > 0.0 ? s - fs / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - s) <= 1e-16 * std::max(1.0, mag)) {
            s = next;
            break;
        }
        s = next;
    }
    double us = a < 0.0 ? -s : s;
    return {us, w * s * s};
}

namespace {

void project(Vec& z, const Lifted& L, const Scaled& S) {
    for (Idx i = 0; i < L.m; ++i)
        if (L.cone_of_row[static_cast<std::size_t>(i)] < 0) z[i] = std::min(std::max(z[i], S.l[i]), S.u[i]);
    for (std::size_t k = 0; k < L.cones.size(); ++k) {
        const auto& cn = L.cones[k];
        auto [pu, pt] = project_parabola(z[cn.row_u], z[cn.row_t], S.weight[k]);
        z[cn.row_u] = pu;
        z[cn.row_t] = pt;
    }
}

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

struct Iterate {
    Vec x;
    Vec z;
    Vec y;
};

// Unscaled iterate restricted to the original problem.
void unscale(const Lifted& L, const Scaled& S, const Iterate& it, SolveReport& rep) {
    Vec x = S.D.cwiseProduct(it.x);
    Vec y = S.E.cwiseProduct(it.y) / S.c;
    rep.x.assign(L.n_orig, 0.0);
    for (std::size_t j = 0; j < L.n_orig; ++j) rep.x[j] = x[static_cast<Idx>(j)];
    rep.y_rows.assign(L.m_orig, 0.0);
    for (std::size_t r = 0; r < L.m_orig; ++r) rep.y_rows[r] = y[static_cast<Idx>(r)];
    rep.y_bounds.assign(L.n_orig, 0.0);
    for (std::size_t b = 0; b < L.bound_var.size(); ++b)
        rep.y_bounds[L.bound_var[b]] = y[L.bound_row0 + static_cast<Idx>(b)];
}

enum class Act : std::uint8_t { Inactive, Lower, Upper, Equal };

class Polisher {
   public:
    Polisher(const Lifted& L, const Scaled& S) : L_(L), S_(S), Ar_(S.A) {}

    bool run(Iterate& it, int rounds) {
        std::vector<Act> act(static_cast<std::size_t>(L_.m), Act::Inactive);
        std::vector<bool> cone_on(L_.cones.size(), false);
        for (Idx i = 0; i < L_.m; ++i) {
            if (L_.cone_of_row[static_cast<std::size_t>(i)] >= 0) continue;
            double zi = it.z[i], yi = it.y[i];
            if (S_.l[i] == S_.u[i])
                act[static_cast<std::size_t>(i)] = Act::Equal;
            else if (has_lo(S_.l[i]) && zi - S_.l[i] < -yi)
                act[static_cast<std::size_t>(i)] = Act::Lower;
            else if (has_hi(S_.u[i]) && S_.u[i] - zi < yi)
                act[static_cast<std::size_t>(i)] = Act::Upper;
        }
        for (std::size_t k = 0; k < L_.cones.size(); ++k) {
            const auto& cn = L_.cones[k];
            double mu = -it.y[cn.row_t];
            double gap = it.z[cn.row_t] - S_.weight[k] * it.z[cn.row_u] * it.z[cn.row_u];
            cone_on[k] = mu > gap;
        }
        for (int round = 0; round < rounds; ++round) {
            Iterate trial = it;
            if (!newton(trial, act, cone_on)) return false;
            bool changed = false;
            Vec ax = S_.A * trial.x;
            const double tol = 1e-9;
            for (Idx i = 0; i < L_.m; ++i) {
                if (L_.cone_of_row[static_cast<std::size_t>(i)] >= 0) continue;
                auto& a = act[static_cast<std::size_t>(i)];
                double scale_l = tol * (1.0 + (has_lo(S_.l[i]) ? std::abs(S_.l[i]) : 0.0));
                double scale_u = tol * (1.0 + (has_hi(S_.u[i]) ? std::abs(S_.u[i]) : 0.0));
                if (a == Act::Inactive) {
                    if (ax[i] < S_.l[i] - scale_l) {
                        a = Act::Lower;
                        changed = true;
                    } else if (ax[i] > S_.u[i] + scale_u) {
                        a = Act::Upper;
                        changed = true;
                    }
                } else if (a == Act::Lower && trial.y[i] > tol) {
                    a = Act::Inactive;
                    changed = true;
                } else if (a == Act::Upper && trial.y[i] < -tol) {
                    a = Act::Inactive;
                    changed = true;
                }
            }
            for (std::size_t k = 0; k < L_.cones.size(); ++k) {
                const auto& cn = L_.cones[k];
                double w = S_.weight[k];
                if (!cone_on[k]) {
                    if (ax[cn.row_t] < w * ax[cn.row_u] * ax[cn.row_u] - tol * (1.0 + std::abs(ax[cn.row_t]))) {
                        cone_on[k] = true;
                        changed = true;
                    }
                } else if (-trial.y[cn.row_t] < -tol) {
                    cone_on[k] = false;
                    changed = true;
                }
            }
            if (!changed) {
                it = trial;
                return true;
            }
        }
        return false;
    }

   private:
    // Newton iteration on the KKT system of the problem restricted to the
    // active set; active cones are equality constraints t = w u^2.
    bool newton(Iterate& it, const std::vector<Act>& act, const std::vector<bool>& cone_on) {
        std::vector<Idx> rows;
        std::vector<double> rhs_b;
        for (Idx i = 0; i < L_.m; ++i) {
            Act a = act[static_cast<std::size_t>(i)];
            if (a == Act::Inactive) continue;
            rows.push_back(i);
            rhs_b.push_back(a == Act::Upper ? S_.u[i] : S_.l[i]);
        }
        std::vector<std::size_t> cones;
        for (std::size_t k = 0; k < cone_on.size(); ++k)
            if (cone_on[k]) cones.push_back(k);
        Idx n = L_.n, nb = static_cast<Idx>(rows.size()), nc = static_cast<Idx>(cones.size());
        Idx dim = n + nb + nc;

        Vec x = it.x;
        Vec yb(nb), mu(nc);
        for (Idx b = 0; b < nb; ++b) yb[b] = it.y[rows[static_cast<std::size_t>(b)]];
        for (Idx c = 0; c < nc; ++c) mu[c] = std::max(0.0, -it.y[L_.cones[cones[static_cast<std::size_t>(c)]].row_t]);

        const double reg = 1e-7;
        double last = kInf;
        for (int iter = 0; iter < 40; ++iter) {
            Vec ax = S_.A * x;
            Vec F(dim);
            Vec grad = S_.P * x + S_.q;
            for (Idx b = 0; b < nb; ++b)
                for (RowMat::InnerIterator a(Ar_, rows[static_cast<std::size_t>(b)]); a; ++a) grad[a.col()] += yb[b] * a.value();
            std::vector<Trip> jt;
            for (Idx c = 0; c < nc; ++c) {
                const auto& cn = L_.cones[cones[static_cast<std::size_t>(c)]];
                double w = S_.weight[cones[static_cast<std::size_t>(c)]];
                double uc = ax[cn.row_u];
                for (RowMat::InnerIterator a(Ar_, cn.row_u); a; ++a) grad[a.col()] += mu[c] * 2.0 * w * uc * a.value();
                for (RowMat::InnerIterator a(Ar_, cn.row_t); a; ++a) grad[a.col()] -= mu[c] * a.value();
                F[n + nb + c] = w * uc * uc - ax[cn.row_t];
            }
            F.head(n) = grad;
            for (Idx b = 0; b < nb; ++b) F[n + b] = ax[rows[static_cast<std::size_t>(b)]] - rhs_b[static_cast<std::size_t>(b)];
            double norm = inf_norm(F);
            if (norm <= 1e-14) break;
            if (iter > 0 && norm >= 0.5 * last && norm <= 1e-11) break;
            if (iter >= 30 && norm > 1e-9) return false;
            last = norm;

            // full unregularized Jacobian
            for (Idx j = 0; j < S_.P.outerSize(); ++j)
                for (SpMat::InnerIterator p(S_.P, j); p; ++p) jt.emplace_back(p.row(), j, p.value());
            for (Idx b = 0; b < nb; ++b)
                for (RowMat::InnerIterator a(Ar_, rows[static_cast<std::size_t>(b)]); a; ++a) {
                    jt.emplace_back(n + b, a.col(), a.value());
                    jt.emplace_back(a.col(), n + b, a.value());
                }
            for (Idx c = 0; c < nc; ++c) {
                std::size_t k = cones[static_cast<std::size_t>(c)];
                const auto& cn = L_.cones[k];
                double w = S_.weight[k];
                double uc = ax[cn.row_u];
                for (RowMat::InnerIterator a(Ar_, cn.row_u); a; ++a) {
                    jt.emplace_back(n + nb + c, a.col(), 2.0 * w * uc * a.value());
                    jt.emplace_back(a.col(), n + nb + c, 2.0 * w * uc * a.value());
                    for (RowMat::InnerIterator b(Ar_, cn.row_u); b; ++b)
                        jt.emplace_back(a.col(), b.col(), 2.0 * w * mu[c] * a.value() * b.value());
                }
                for (RowMat::InnerIterator a(Ar_, cn.row_t); a; ++a) {
                    jt.emplace_back(n + nb + c, a.col(), -a.value());
                    jt.emplace_back(a.col(), n + nb + c, -a.value());
                }
            }
            SpMat J(dim, dim);
            J.setFromTriplets(jt.begin(), jt.end());
            std::vector<Trip> kt;
            for (Idx j = 0; j < J.outerSize(); ++j)
                for (SpMat::InnerIterator p(J, j); p; ++p)
                    if (p.row() >= j) kt.emplace_back(p.row(), j, p.value());
            for (Idx i = 0; i < dim; ++i) kt.emplace_back(i, i, i < n ? reg : -reg);
            SpMat K(dim, dim);
            K.setFromTriplets(kt.begin(), kt.end());
            Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt;
            ldlt.compute(K);
            if (ldlt.info() != Eigen::Success) return false;
            Vec rhs = -F;
            Vec d = ldlt.solve(rhs);
            for (int ref = 0; ref < 25; ++ref) {
                Vec r = rhs - J * d;
                if (inf_norm(r) <= 1e-15 * (1.0 + inf_norm(rhs))) break;
                d += ldlt.solve(r);
            }
            if (!d.allFinite()) return false;
            x += d.head(n);
            yb += d.segment(n, nb);
            mu += d.tail(nc);
            if (nc == 0 && iter >= 1) break;
        }
        it.x = x;
        it.z = S_.A * x;
        it.y.setZero();
        for (Idx b = 0; b < nb; ++b) it.y[rows[static_cast<std::size_t>(b)]] = yb[b];
        for (Idx c = 0; c < nc; ++c) {
            std::size_t k = cones[static_cast<std::size_t>(c)];
            const auto& cn = L_.cones[k];
            it.y[cn.row_u] = 2.0 * S_.weight[k] * it.z[cn.row_u] * mu[c];
            it.y[cn.row_t] = -mu[c];
        }
        return x.allFinite();
    }

    const Lifted& L_;
    const Scaled& S_;
    RowMat Ar_;
};

class Admm {
   public:
    Admm(const Lifted& L, const Scaled& S, const SolverSettings& st) : L_(L), S_(S), st_(st) {
        rho_ = Vec(L.m);
        set_rho(st.rho);
        analyze();
    }

    void set_rho(double rho) {
        rho_scalar_ = rho;
        for (Idx i = 0; i < L_.m; ++i) {
            bool cone = L_.cone_of_row[static_cast<std::size_t>(i)] >= 0;
            if (cone)
                rho_[i] = rho;
            else if (!has_lo(S_.l[i]) && !has_hi(S_.u[i]))
                rho_[i] = 1e-6;
            else if (S_.l[i] == S_.u[i])
                rho_[i] = 1e3 * rho;
            else
                rho_[i] = rho;
        }
    }

    void analyze() {
        SpMat K = kkt();
        ldlt_.analyzePattern(K);
        ldlt_.factorize(K);
    }

    void refactor() { ldlt_.factorize(kkt()); }

    bool ok() const { return ldlt_.info() == Eigen::Success; }

    void step(Iterate& it) {
        Idx n = L_.n, m = L_.m;
        Vec rhs(n + m);
        rhs.head(n) = st_.sigma * it.x - S_.q;
        rhs.tail(m) = it.z - it.y.cwiseQuotient(rho_);
        Vec sol = ldlt_.solve(rhs);
        Vec xt = sol.head(n);
        Vec zt = it.z + (sol.tail(m) - it.y).cwiseQuotient(rho_);
        it.x = st_.alpha * xt + (1.0 - st_.alpha) * it.x;
        Vec zr = st_.alpha * zt + (1.0 - st_.alpha) * it.z;
        Vec znew = zr + it.y.cwiseQuotient(rho_);
        project(znew, L_, S_);
        it.y += rho_.cwiseProduct(zr - znew);
        it.z = std::move(znew);
    }

    double rho() const { return rho_scalar_; }

   private:
    SpMat kkt() const {
        Idx n = L_.n, m = L_.m;
        std::vector<Trip> t;
        t.reserve(static_cast<std::size_t>(S_.P.nonZeros() + S_.A.nonZeros() + n + m));
        for (Idx j = 0; j < S_.P.outerSize(); ++j)
            for (SpMat::InnerIterator p(S_.P, j); p; ++p)
                if (p.row() >= j) t.emplace_back(p.row(), j, p.value());
        for (Idx j = 0; j < n; ++j) t.emplace_back(j, j, st_.sigma);
        for (Idx j = 0; j < S_.A.outerSize(); ++j)
            for (SpMat::InnerIterator a(S_.A, j); a; ++a) t.emplace_back(n + a.row(), j, a.value());
        for (Idx i = 0; i < m; ++i) t.emplace_back(n + i, n + i, -1.0 / rho_[i]);
        SpMat K(n + m, n + m);
        K.setFromTriplets(t.begin(), t.end());
        return K;
    }

    const Lifted& L_;
    const Scaled& S_;
    const SolverSettings& st_;
    Vec rho_;
    double rho_scalar_ = 0.1;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt_;
};

double cone_support(double a, double b, double w, double scale) {
    double tiny = 1e-12 * std::max(scale, 1e-300);
    if (b < -tiny) return -a * a / (4.0 * b * w);
    if (std::abs(a) <= tiny && std::abs(b) <= tiny) return 0.0;
    return kInf;
}

bool certifies_infeasibility(const Lifted& L, const Scaled& S, const Vec& dy_scaled, double eps) {
    Vec dy = S.E.cwiseProduct(dy_scaled);
    double nrm = inf_norm(dy);
    if (nrm < 1e-14) return false;
    Vec atdy = S.D.cwiseInverse().cwiseProduct(S.A.transpose() * dy_scaled);
    if (inf_norm(atdy) > eps * nrm) return false;
    double support = 0.0;
    for (Idx i = 0; i < L.m; ++i) {
        if (L.cone_of_row[static_cast<std::size_t>(i)] >= 0) continue;
        if (dy[i] > 0.0) {
            if (!has_hi(L.u[i])) {
                if (dy[i] > eps * nrm) return false;
                continue;
            }
            support += L.u[i] * dy[i];
        } else if (dy[i] < 0.0) {
            if (!has_lo(L.l[i])) {
                if (-dy[i] > eps * nrm) return false;
                continue;
            }
            support += L.l[i] * dy[i];
        }
    }
    for (const auto& cn : L.cones) support += cone_support(dy[cn.row_u], dy[cn.row_t], cn.weight, nrm);
    return support < -eps * nrm;
}

Iterate initial_iterate(const ConvexProblem& p, const Lifted& L, const Scaled& S, const WarmStart* ws) {
    Iterate it{Vec::Zero(L.n), Vec::Zero(L.m), Vec::Zero(L.m)};
    if (!ws || ws->x.size() != p.num_vars) {
        project(it.z, L, S);
        return it;
    }
    Vec x = Vec::Zero(L.n);
    for (std::size_t j = 0; j < p.num_vars; ++j) x[static_cast<Idx>(j)] = ws->x[j];
    for (std::size_t k = 0; k < p.row_atoms.size(); ++k) x[static_cast<Idx>(p.num_vars + k)] = p.row_atoms[k].atom.value(ws->x);
    Vec y = Vec::Zero(L.m);
    if (ws->y_rows.size() == p.num_rows())
        for (std::size_t r = 0; r < p.num_rows(); ++r) y[static_cast<Idx>(r)] = ws->y_rows[r];
    for (std::size_t k = 0; k < p.row_atoms.size(); ++k) {
        const auto& cn = L.cones[k];
        double mu = std::max(0.0, y[static_cast<Idx>(p.row_atoms[k].row)]);
        const auto& a = p.row_atoms[k].atom;
        double u = ws->x[a.i] + (a.j >= 0 ? a.sign * ws->x[static_cast<std::size_t>(a.j)] : 0.0);
        y[cn.row_u] = 2.0 * a.weight * u * mu;
        y[cn.row_t] = -mu;
    }
    if (ws->y_bounds.size() == p.num_vars)
        for (std::size_t b = 0; b < L.bound_var.size(); ++b) y[L.bound_row0 + static_cast<Idx>(b)] = ws->y_bounds[L.bound_var[b]];
    it.x = x.cwiseQuotient(S.D);
    it.z = S.E.cwiseProduct(L.A * x);
    project(it.z, L, S);
    it.y = S.c * y.cwiseQuotient(S.E);
    return it;
}

}  // namespace

std::pair<double, double> residuals(const ConvexProblem& p, const std::vector<double>& x,
                                    const std::vector<double>& y_rows, const std::vector<double>& y_bounds) {
    if (x.size() != p.num_vars || y_rows.size() != p.num_rows() || y_bounds.size() != p.num_vars)
        throw ShapeMismatch("residual candidate does not match the problem dimensions");
    auto g = p.row_values(x);
    double prim = 0.0, dual = 0.0;
    for (std::size_t r = 0; r < p.num_rows(); ++r) {
        prim = std::max(prim, std::max(p.row_lower[r] - g[r], g[r] - p.row_upper[r]));
        dual = std::max(dual, complementarity(y_rows[r], g[r], p.row_lower[r], p.row_upper[r]));
    }
    for (std::size_t j = 0; j < p.num_vars; ++j) {
        prim = std::max(prim, std::max(p.var_lower[j] - x[j], x[j] - p.var_upper[j]));
        dual = std::max(dual, complementarity(y_bounds[j], x[j], p.var_lower[j], p.var_upper[j]));
    }
    auto stat = objective_gradient(p, x);
    for (const auto& e : p.entries) stat[e.col] += y_rows[e.row] * e.value;
    for (const auto& ra : p.row_atoms) {
        const auto& a = ra.atom;
        double s = x[a.i] + (a.j >= 0 ? a.sign * x[static_cast<std::size_t>(a.j)] : 0.0);
        double yr = y_rows[ra.row];
        stat[a.i] += yr * 2.0 * a.weight * s;
        if (a.j >= 0) stat[static_cast<std::size_t>(a.j)] += yr * 2.0 * a.weight * s * a.sign;
    }
    for (std::size_t j = 0; j < p.num_vars; ++j) dual = std::max(dual, std::abs(stat[j] + y_bounds[j]));
    return {std::max(prim, 0.0), dual};
}

SolveReport solve(const ConvexProblem& problem, const SolverSettings& st, const WarmStart* warm_start) {
    problem.validate();
    if (st.method == SolverMethod::InteriorPoint) return solve_interior_point(problem, st);
    Lifted L = lift(problem);
    Scaled S = equilibrate(L, st.scaling_iters);
    Admm admm(L, S, st);
    Iterate it = initial_iterate(problem, L, S, warm_start);

    SolveReport rep;
    auto finish = [&](const Iterate& fin, SolveStatus status, std::size_t iters, bool polished) {
        unscale(L, S, fin, rep);
        rep.status = status;
        rep.iterations = iters;
        rep.polished = polished;
        rep.objective = problem.objective(rep.x);
        auto [pr, du] = residuals(problem, rep.x, rep.y_rows, rep.y_bounds);
        rep.primal_residual = pr;
        rep.dual_residual = du;
        return rep;
    };
    auto within_tolerance = [&](const Iterate& cand) {
        SolveReport tmp;
        unscale(L, S, cand, tmp);
        auto [pr, du] = residuals(problem, tmp.x, tmp.y_rows, tmp.y_bounds);
        Scales sc = residual_scales(problem, tmp.x, tmp.y_rows, tmp.y_bounds);
        return pr <= st.eps_abs + st.eps_rel * sc.primal && du <= st.eps_abs + st.eps_rel * sc.dual;
    };
    auto try_polish = [&](Iterate& cand) {
        if (!st.polish) return false;
        Polisher pol(L, S);
        Iterate trial = cand;
        if (!pol.run(trial, st.polish_rounds)) return false;
        if (!within_tolerance(trial)) return false;
        cand = trial;
        return true;
    };

    if (L.n == 0) return finish(it, SolveStatus::Optimal, 0, false);
    if (!admm.ok()) throw NonConvergence(0);

    double eps_abs = st.eps_abs, eps_rel = st.eps_rel;
    std::size_t last_polish = 0;
    bool polish_tried = false;
    Vec y_prev = it.y;
    std::size_t adapt_gap = st.check_every, next_adapt = 0;
    for (std::size_t k = 1; k <= st.max_iter; ++k) {
        bool check = k % st.check_every == 0 || k == st.max_iter;
        if (check) y_prev = it.y;
        admm.step(it);
        if (!check) continue;

        Vec ax = S.A * it.x;
        Vec einv = S.E.cwiseInverse();
        Vec dinv = S.D.cwiseInverse();
        double prim = inf_norm(einv.cwiseProduct(ax - it.z));
        double prim_scale = std::max(inf_norm(einv.cwiseProduct(ax)), inf_norm(einv.cwiseProduct(it.z)));
        Vec px = S.P * it.x;
        Vec aty = S.A.transpose() * it.y;
        double dual = inf_norm(dinv.cwiseProduct(px + S.q + aty)) / S.c;
        double dual_scale = std::max({inf_norm(dinv.cwiseProduct(px)), inf_norm(dinv.cwiseProduct(aty)),
                                      inf_norm(dinv.cwiseProduct(S.q))}) /
                            S.c;

        if (certifies_infeasibility(L, S, it.y - y_prev, st.eps_prim_inf))
            return finish(it, SolveStatus::PrimalInfeasible, k, false);

        bool converged = prim <= eps_abs + eps_rel * prim_scale && dual <= eps_abs + eps_rel * dual_scale;
        bool near = prim <= 1e-4 * (1.0 + prim_scale) && dual <= 1e-4 * (1.0 + dual_scale);
        if (converged || (near && (!polish_tried || k - last_polish >= 20 * st.check_every))) {
            polish_tried = true;
            last_polish = k;
            Iterate cand = it;
            if (try_polish(cand)) return finish(cand, SolveStatus::Optimal, k, true);
            if (converged) {
                if (within_tolerance(it)) return finish(it, SolveStatus::Optimal, k, false);
                eps_abs = std::max(eps_abs * 0.1, 1e-15);
                eps_rel = std::max(eps_rel * 0.1, 1e-15);
            }
        }

        // each change of rho restarts the ADMM contraction, so changes become rarer over time
        if (st.adaptive_rho && k >= next_adapt) {
            double pr = prim / (std::max(prim_scale, 1e-30));
            double dr = dual / (std::max(dual_scale, 1e-30));
            if (pr > 0.0 && dr > 0.0) {
                double nr = std::clamp(admm.rho() * std::sqrt(pr / dr), 1e-6, 1e6);
                if (nr > 5.0 * admm.rho() || nr < 0.2 * admm.rho()) {
                    admm.set_rho(nr);
                    admm.refactor();
                    if (!admm.ok()) throw NonConvergence(k);
                    adapt_gap *= 2;
                    next_adapt = k + adapt_gap;
                }
            }
        }
    }
    return finish(it, SolveStatus::MaxIterations, st.max_iter, false);
}

namespace {

std::string fmt(double v) {
    if (v == kInf) return "inf";
    if (v == -kInf) return "-inf";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

double parse_num(const std::string& tok, std::size_t line) {
    if (tok == "inf" || tok == "+inf") return kInf;
    if (tok == "-inf") return -kInf;
    try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError("malformed number '" + tok + "'", line, 1);
    }
}

}  // namespace

std::string dump_problem(const ConvexProblem& p) {
    std::ostringstream os;
    os << "convex-problem\n";
    os << "vars " << p.num_vars << "\nrows " << p.num_rows() << "\n";
    os << "objective_constant " << fmt(p.objective_constant) << "\n";
    os << "q";
    for (double v : p.q) os << ' ' << fmt(v);
    os << "\nobjective_atoms " << p.objective_atoms.size() << "\n";
    for (const auto& a : p.objective_atoms) os << fmt(a.weight) << ' ' << a.i << ' ' << a.j << ' ' << fmt(a.sign) << "\n";
    os << "var_bounds\n";
    for (std::size_t j = 0; j < p.num_vars; ++j) os << fmt(p.var_lower[j]) << ' ' << fmt(p.var_upper[j]) << "\n";
    os << "row_bounds\n";
    for (std::size_t r = 0; r < p.num_rows(); ++r) os << fmt(p.row_lower[r]) << ' ' << fmt(p.row_upper[r]) << "\n";
    os << "entries " << p.entries.size() << "\n";
    for (const auto& e : p.entries) os << e.row << ' ' << e.col << ' ' << fmt(e.value) << "\n";
    os << "row_atoms " << p.row_atoms.size() << "\n";
    for (const auto& ra : p.row_atoms)
        os << ra.row << ' ' << fmt(ra.atom.weight) << ' ' << ra.atom.i << ' ' << ra.atom.j << ' ' << fmt(ra.atom.sign) << "\n";
    return os.str();
}

ConvexProblem load_problem(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::vector<std::string>> lines;
    std::string raw;
    while (std::getline(in, raw)) {
        std::istringstream ls(raw);
        std::vector<std::string> toks;
        std::string t;
        while (ls >> t) toks.push_back(t);
        lines.push_back(std::move(toks));
    }
    std::size_t ln = 0;
    auto next = [&](const char* what) -> std::vector<std::string>& {
        while (ln < lines.size() && lines[ln].empty()) ++ln;
        if (ln >= lines.size()) throw ParseError(std::string("unexpected end of input, expected ") + what, ln + 1, 1);
        return lines[ln++];
    };
    auto keyword = [&](const char* kw, std::size_t args) -> std::vector<std::string>& {
        auto& l = next(kw);
        if (l[0] != kw || (args != static_cast<std::size_t>(-1) && l.size() != args + 1))
            throw ParseError(std::string("expected '") + kw + "'", ln, 1);
        return l;
    };
    auto count = [&](const std::string& tok) {
        double v = parse_num(tok, ln);
        if (v < 0 || v != std::floor(v)) throw ParseError("expected a count, got '" + tok + "'", ln, 1);
        return static_cast<std::size_t>(v);
    };
    auto index = [&](const std::string& tok) {
        double v = parse_num(tok, ln);
        if (v != std::floor(v)) throw ParseError("expected an index, got '" + tok + "'", ln, 1);
        return v;
    };

    ConvexProblem p;
    keyword("convex-problem", 0);
    p.num_vars = count(keyword("vars", 1)[1]);
    std::size_t m = count(keyword("rows", 1)[1]);
    p.objective_constant = parse_num(keyword("objective_constant", 1)[1], ln);
    auto& ql = keyword("q", p.num_vars);
    for (std::size_t j = 0; j < p.num_vars; ++j) p.q.push_back(parse_num(ql[j + 1], ln));
    std::size_t na = count(keyword("objective_atoms", 1)[1]);
    for (std::size_t k = 0; k < na; ++k) {
        auto& l = next("objective atom");
        if (l.size() != 4) throw ParseError("objective atom needs 4 fields", ln, 1);
        p.objective_atoms.push_back({parse_num(l[0], ln), static_cast<std::size_t>(index(l[1])),
                                     static_cast<std::ptrdiff_t>(index(l[2])), parse_num(l[3], ln)});
    }
    keyword("var_bounds", 0);
    for (std::size_t j = 0; j < p.num_vars; ++j) {
        auto& l = next("variable bounds");
        if (l.size() != 2) throw ParseError("variable bounds need 2 fields", ln, 1);
        p.var_lower.push_back(parse_num(l[0], ln));
        p.var_upper.push_back(parse_num(l[1], ln));
    }
    keyword("row_bounds", 0);
    for (std::size_t r = 0; r < m; ++r) {
        auto& l = next("row bounds");
        if (l.size() != 2) throw ParseError("row bounds need 2 fields", ln, 1);
        p.add_row(parse_num(l[0], ln), parse_num(l[1], ln));
    }
    std::size_t ne = count(keyword("entries", 1)[1]);
    for (std::size_t k = 0; k < ne; ++k) {
        auto& l = next("entry");
        if (l.size() != 3) throw ParseError("entry needs 3 fields", ln, 1);
        p.entries.push_back({static_cast<std::size_t>(index(l[0])), static_cast<std::size_t>(index(l[1])), parse_num(l[2], ln)});
    }
    std::size_t nr = count(keyword("row_atoms", 1)[1]);
    for (std::size_t k = 0; k < nr; ++k) {
        auto& l = next("row atom");
        if (l.size() != 5) throw ParseError("row atom needs 5 fields", ln, 1);
        p.row_atoms.push_back({static_cast<std::size_t>(index(l[0])),
                               {parse_num(l[1], ln), static_cast<std::size_t>(index(l[2])),
                                static_cast<std::ptrdiff_t>(index(l[3])), parse_num(l[4], ln)}});
    }
    p.validate();
    return p;
}

}  // namespace pmdpsyn
