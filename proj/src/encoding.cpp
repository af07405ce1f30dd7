#include "pmdpsyn/encoding.hpp"

#include "pmdpsyn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace pmdpsyn {

namespace {

constexpr std::size_t kNoVar = std::numeric_limits<std::size_t>::max();

}  // namespace

double QcqpEncoding::row_violation(std::size_t r, const std::vector<double>& params,
                                   const std::vector<double>& probs) const {
    const BellmanRow& row = rows[r];
    double rhs = row.constant;
    for (const auto& [col, c] : row.linear)
        rhs += c * (col < num_params ? params[col] : probs[col - num_params]);
    for (std::size_t t : row.terms) {
        const BilinearTerm& b = terms[t];
        rhs += (b.coeff * params[b.param_var] + b.affine_part) * probs[b.prob_var];
    }
    return sense() * (rhs - probs[row.prob_var]);
}

bool QcqpEncoding::feasible(const std::vector<double>& params, const std::vector<double>& probs, double tol) const {
    if (params.size() != num_params || probs.size() != num_probs) throw ShapeMismatch("point does not fit the encoding");
    for (std::size_t r = 0; r < rows.size(); ++r)
        if (row_violation(r, params, probs) > tol) return false;
    for (std::size_t j = 0; j < num_probs; ++j)
        if (probs[j] < -tol || probs[j] > prob_upper + tol) return false;
    if (initial_var != kNoVar) {
        double p = probs[initial_var];
        if (direction == Direction::AtMost ? p > threshold + tol : p < threshold - tol) return false;
    }
    for (ParamId i = 0; i < num_params; ++i)
        if (params[i] < param_lower[i] - tol || params[i] > param_upper[i] + tol) return false;
    for (const auto& t : transitions)
        if (t.value(params) < eps - tol) return false;
    return true;
}

QcqpEncoding build_qcqp(const ParametricMDP& model, const Specification& spec, double eps) {
    validate_spec(model, spec);
    return build_qcqp(model, spec, classify_states(model, spec.targets, quantifier_for(spec)), eps);
}

QcqpEncoding build_qcqp(const ParametricMDP& model, const Specification& spec, const StateClassification& cls,
                        double eps) {
    validate_spec(model, spec);
    QcqpEncoding q;
    q.kind = spec.kind;
    q.direction = spec.direction;
    q.threshold = spec.threshold;
    q.eps = eps;
    q.indexing = simplify_for_encoding(model, spec, cls);
    const ReducedIndexing& ix = q.indexing;
    q.num_params = model.parameters.size();
    q.num_probs = ix.num_vars();
    q.prob_upper = spec.kind == SpecKind::ReachProbability ? 1.0 : kInf;
    q.initial_var = ix.is_variable(model.initial) ? static_cast<std::size_t>(ix.var_of_state[model.initial]) : kNoVar;

    if (auto box = rectangular_region(model, eps)) {
        q.box_region = true;
        // step inside so that rounding cannot push a transition below eps
        for (ParamId i = 0; i < q.num_params; ++i) {
            double lo = box->lower[i], hi = box->upper[i], in = std::min(1e-12, 0.25 * (hi - lo));
            q.param_lower.push_back(lo + in);
            q.param_upper.push_back(hi - in);
        }
    } else {
        q.param_lower.assign(q.num_params, -kInf);
        q.param_upper.assign(q.num_params, kInf);
    }

    for (StateId s = 0; s < model.num_states; ++s)
        for (std::size_t a = 0; a < model.actions[s].size(); ++a)
            for (const auto& t : model.actions[s][a].transitions) {
                if (t.probability.is_constant()) continue;
                ParametricTransition pt;
                pt.ref = {s, a, t.successor, 0.0};
                pt.constant = to_double(t.probability.constant());
                for (const auto& [p, c] : t.probability.coefficients()) pt.coeffs.emplace_back(p, to_double(c));
                q.transitions.push_back(std::move(pt));
            }

    bool cost = spec.kind == SpecKind::ExpectedCost;
    for (std::size_t v = 0; v < ix.num_vars(); ++v) {
        StateId s = ix.state_of_var[v];
        for (std::size_t a = 0; a < model.actions[s].size(); ++a) {
            const Action& act = model.actions[s][a];
            BellmanRow row;
            row.state = s;
            row.action = a;
            row.prob_var = v;
            row.constant = cost ? to_double(act.cost) : 0.0;
            std::map<std::size_t, double> linear;
            std::vector<BilinearTerm> terms;
            bool vacuous = false;
            for (const auto& t : act.transitions) {
                const AffineExpr& P = t.probability;
                double c0 = to_double(P.constant());
                if (ix.is_variable(t.successor)) {
                    auto z = static_cast<std::size_t>(ix.var_of_state[t.successor]);
                    if (P.is_constant()) {
                        linear[q.prob_col(z)] += c0;
                        continue;
                    }
                    bool first = true;
                    for (const auto& [p, c] : P.coefficients()) {
                        terms.push_back({q.rows.size(), z, p, to_double(c), first ? c0 : 0.0});
                        first = false;
                    }
                } else if (ix.infinite[t.successor]) {
                    // the successor's expected cost diverges, so p_s <= ... holds for free
                    vacuous = true;
                    break;
                } else {
                    double kappa = ix.constant_value[t.successor];
                    if (kappa == 0.0) continue;
                    row.constant += kappa * c0;
                    for (const auto& [p, c] : P.coefficients()) linear[q.param_col(p)] += kappa * to_double(c);
                }
            }
            if (vacuous) continue;
            row.linear.assign(linear.begin(), linear.end());
            for (auto& t : terms) {
                row.terms.push_back(q.terms.size());
                q.terms.push_back(t);
            }
            q.rows.push_back(std::move(row));
        }
    }
    return q;
}

DcParts dc_decompose(double coeff) {
    DcParts d;
    d.d = std::abs(coeff) / 2.0;
    d.sign = coeff >= 0.0 ? 1.0 : -1.0;
    return d;
}

DcParts dc_decompose(const BilinearTerm& term) { return dc_decompose(term.coeff); }

namespace {

// Receives the problem in build order. Builder appends; Refresher overwrites
// the values of an existing problem and checks that the structure agrees.
struct Builder {
    ConvexProblem& p;
    void var(double lo, double hi, double cost) { p.add_var(lo, hi, cost); }
    std::size_t row(double lo, double hi) { return p.add_row(lo, hi); }
    void entry(std::size_t r, std::size_t c, double v) { p.add_entry(r, c, v); }
    void atom(std::size_t r, const QuadAtom& a) { p.row_atoms.push_back({r, a}); }
    void finish() {}
};

struct Refresher {
    ConvexProblem& p;
    std::size_t nv = 0, nr = 0, ne = 0, na = 0;

    [[noreturn]] static void mismatch() { throw ShapeMismatch("problem was not built from this encoding"); }
    void var(double lo, double hi, double cost) {
        if (nv >= p.num_vars) mismatch();
        p.var_lower[nv] = lo;
        p.var_upper[nv] = hi;
        p.q[nv] = cost;
        ++nv;
    }
    std::size_t row(double lo, double hi) {
        if (nr >= p.num_rows()) mismatch();
        p.row_lower[nr] = lo;
        p.row_upper[nr] = hi;
        return nr++;
    }
    void entry(std::size_t r, std::size_t c, double v) {
        if (ne >= p.entries.size() || p.entries[ne].row != r || p.entries[ne].col != c) mismatch();
        p.entries[ne++].value = v;
    }
    void atom(std::size_t r, const QuadAtom& a) {
        if (na >= p.row_atoms.size()) mismatch();
        auto& ra = p.row_atoms[na++];
        if (ra.row != r || ra.atom.i != a.i || ra.atom.j != a.j) mismatch();
        ra.atom = a;
    }
    void finish() {
        if (nv != p.num_vars || nr != p.num_rows() || ne != p.entries.size() || na != p.row_atoms.size()) mismatch();
    }
};

template <class Sink>
void emit(Sink& out, const QcqpEncoding& q, const Anchor& anchor, const ApproxSettings& s) {
    if (anchor.params.size() != q.num_params || anchor.probs.size() != q.num_probs)
        throw ShapeMismatch("anchor does not fit the encoding");
    bool scp = s.kind == Approximation::Scp;
    double sigma = q.sense();
    double dp = s.delta + 1.0;

    for (ParamId i = 0; i < q.num_params; ++i) out.var(q.param_lower[i], q.param_upper[i], 0.0);
    for (std::size_t j = 0; j < q.num_probs; ++j) out.var(0.0, q.prob_upper, j == q.initial_var ? sigma : 0.0);
    for (std::size_t j = 0; j < q.num_probs; ++j) out.var(0.0, kInf, s.tau);

    std::map<std::size_t, double> coef;
    for (const auto& row : q.rows) {
        coef.clear();
        double hi = -sigma * row.constant;
        for (const auto& [col, c] : row.linear) coef[col] += sigma * c;
        coef[q.prob_col(row.prob_var)] -= sigma;
        coef[q.penalty_col(row.prob_var)] -= 1.0;
        for (std::size_t ti : row.terms) {
            const BilinearTerm& t = q.terms[ti];
            double e = sigma * t.coeff;
            double yh = anchor.params[t.param_var], zh = anchor.probs[t.prob_var];
            std::size_t yc = q.param_col(t.param_var), zc = q.prob_col(t.prob_var);
            coef[zc] += sigma * t.affine_part;
            if (scp) {
                // e*y*z ~ e*(yh*zh + zh*(y - yh) + yh*(z - zh))
                coef[yc] += e * zh;
                coef[zc] += e * yh;
                hi += e * yh * zh;
            } else {
                DcParts dc = dc_decompose(e);
                coef[yc] += -2.0 * dc.d * yh;
                coef[zc] += -2.0 * dc.d * zh;
                hi -= dc.d * (yh * yh + zh * zh);
            }
        }
        std::size_t r = out.row(-kInf, hi);
        for (const auto& [col, c] : coef) out.entry(r, col, c);
        if (!scp)
            for (std::size_t ti : row.terms) {
                const BilinearTerm& t = q.terms[ti];
                DcParts dc = dc_decompose(sigma * t.coeff);
                out.atom(r, QuadAtom{dc.d, q.param_col(t.param_var), static_cast<std::ptrdiff_t>(q.prob_col(t.prob_var)),
                                     dc.sign});
            }
    }

    auto clamped = [&](double v) { return std::max(v, q.eps); };
    if (q.initial_var != kNoVar) {
        double lo = -kInf, hi = kInf;
        if (q.direction == Direction::AtMost)
            hi = q.threshold;
        else
            lo = q.threshold;
        if (scp) {
            // keep the threshold reachable from inside the trust region
            double ph = clamped(anchor.probs[q.initial_var]);
            if (q.direction == Direction::AtMost)
                hi = std::max(hi, ph / dp);
            else
                lo = std::min(lo, ph * dp);
        }
        std::size_t r = out.row(lo, hi);
        out.entry(r, q.prob_col(q.initial_var), 1.0);
    }

    if (!q.box_region)
        for (const auto& t : q.transitions) {
            std::size_t r = out.row(q.eps - t.constant, kInf);
            for (const auto& [p, c] : t.coeffs) out.entry(r, q.param_col(p), c);
        }

    if (scp) {
        for (std::size_t j = 0; j < q.num_probs; ++j) {
            double ph = clamped(anchor.probs[j]);
            std::size_t r = out.row(ph / dp, ph * dp);
            out.entry(r, q.prob_col(j), 1.0);
        }
        for (const auto& t : q.transitions) {
            double ph = clamped(t.value(anchor.params));
            std::size_t r = out.row(ph / dp - t.constant, ph * dp - t.constant);
            for (const auto& [p, c] : t.coeffs) out.entry(r, q.param_col(p), c);
        }
    }
    out.finish();
}

}  // namespace

ConvexProblem build_approximation(const QcqpEncoding& q, const Anchor& anchor, const ApproxSettings& s) {
    ConvexProblem p;
    Builder b{p};
    emit(b, q, anchor, s);
    return p;
}

ConvexProblem convexify_ccp(const QcqpEncoding& q, const Anchor& anchor, double tau) {
    return build_approximation(q, anchor, {Approximation::Ccp, tau, 0.0});
}

ConvexProblem linearize_scp(const QcqpEncoding& q, const Anchor& anchor, double tau, double delta) {
    return build_approximation(q, anchor, {Approximation::Scp, tau, delta});
}

void update_anchor(ConvexProblem& problem, const QcqpEncoding& q, const Anchor& anchor, const ApproxSettings& s) {
    Refresher r{problem};
    emit(r, q, anchor, s);
}

double SplitSolution::penalty_sum() const {
    double s = 0.0;
    for (double k : penalties) s += k;
    return s;
}

SplitSolution split_solution(const QcqpEncoding& q, const std::vector<double>& x) {
    if (x.size() != q.num_cols()) throw ShapeMismatch("solution does not fit the encoding");
    auto at = [&](std::size_t b, std::size_t n) {
        return std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(b), x.begin() + static_cast<std::ptrdiff_t>(b + n));
    };
    return {at(0, q.num_params), at(q.num_params, q.num_probs), at(q.num_params + q.num_probs, q.num_probs)};
}

std::vector<double> probs_from_states(const QcqpEncoding& q, const std::vector<double>& per_state) {
    std::vector<double> out(q.num_probs);
    double top = 0.0;
    for (double v : per_state)
        if (std::isfinite(v)) top = std::max(top, v);
    for (std::size_t j = 0; j < q.num_probs; ++j) {
        double v = per_state[q.indexing.state_of_var[j]];
        out[j] = std::isfinite(v) ? v : 2.0 * top + 1.0;
    }
    return out;
}

namespace {

// min sum (x - target)^2 subject to every parametric transition >= margin
std::optional<std::vector<double>> project(const QcqpEncoding& q, const std::vector<double>& target, double margin) {
    ConvexProblem p;
    for (ParamId i = 0; i < q.num_params; ++i) {
        p.add_var(q.param_lower[i], q.param_upper[i], -2.0 * target[i]);
        p.objective_atoms.push_back({1.0, i, -1, 1.0});
        p.objective_constant += target[i] * target[i];
    }
    for (const auto& t : q.transitions) {
        std::size_t r = p.add_row(margin - t.constant, kInf);
        for (const auto& [j, c] : t.coeffs) p.add_entry(r, j, c);
    }
    auto rep = solve(p);
    if (rep.status != SolveStatus::Optimal) return std::nullopt;
    return rep.x;
}

}  // namespace

std::vector<double> interior_point(const QcqpEncoding& q, double margin) {
    if (q.box_region) {
        std::vector<double> c(q.num_params);
        for (ParamId i = 0; i < q.num_params; ++i) c[i] = 0.5 * (q.param_lower[i] + q.param_upper[i]);
        return c;
    }
    auto x = project(q, std::vector<double>(q.num_params, 0.5), margin);
    if (!x) throw ModelError("no graph-preserving parameter valuation found");
    return *x;
}

std::optional<std::vector<double>> repair_params(const QcqpEncoding& q, const std::vector<double>& params) {
    if (params.size() != q.num_params) throw ShapeMismatch("parameter vector does not fit the encoding");
    std::vector<double> x = params;
    for (ParamId i = 0; i < q.num_params; ++i) x[i] = std::clamp(x[i], q.param_lower[i], q.param_upper[i]);
    if (q.box_region) return x;
    bool ok = std::all_of(q.transitions.begin(), q.transitions.end(), [&](const auto& t) { return t.value(x) >= q.eps; });
    if (ok) return x;
    auto y = project(q, x, q.eps * 1.01 + 1e-9);
    if (!y) return std::nullopt;
    if (!std::all_of(q.transitions.begin(), q.transitions.end(), [&](const auto& t) { return t.value(*y) >= q.eps; }))
        return std::nullopt;
    return y;
}

}  // namespace pmdpsyn
