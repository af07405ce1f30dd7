#include "pmdpsyn/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <string_view>

namespace pmdpsyn {

std::size_t ParametricMDP::num_choices() const {
    std::size_t n = 0;
    for (const auto& a : actions) n += a.size();
    return n;
}

std::size_t ParametricMDP::num_transitions() const {
    std::size_t n = 0;
    for (const auto& state : actions)
        for (const auto& a : state) n += a.transitions.size();
    return n;
}

bool ParametricMDP::is_pmc() const {
    return std::all_of(actions.begin(), actions.end(), [](const auto& a) { return a.size() == 1; });
}

std::optional<ParamId> ParametricMDP::parameter_index(const std::string& name) const {
    auto it = std::find(parameters.begin(), parameters.end(), name);
    if (it == parameters.end()) return std::nullopt;
    return static_cast<ParamId>(it - parameters.begin());
}

Valuation Valuation::from_dense(const std::vector<double>& values) {
    Valuation v;
    for (std::size_t i = 0; i < values.size(); ++i) v.set(i, values[i]);
    return v;
}

double Valuation::at(ParamId id) const {
    auto it = values_.find(id);
    if (it == values_.end()) throw MissingParameter(id);
    return it->second;
}

std::vector<double> Valuation::dense(std::size_t n) const {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = at(i);
    return out;
}

std::string Specification::to_string() const {
    std::ostringstream os;
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, threshold);
    os << (kind == SpecKind::ReachProbability ? "P" : "E") << (direction == Direction::AtMost ? "<=" : ">=")
       << std::string_view(buf, static_cast<std::size_t>(end - buf)) << " [F";
    for (auto t : targets) os << ' ' << t;
    os << ']';
    return os.str();
}

void validate_spec(const ParametricMDP& model, const Specification& spec) {
    if (!std::isfinite(spec.threshold)) throw SpecError("threshold must be finite");
    if (spec.kind == SpecKind::ReachProbability) {
        if (spec.threshold < 0.0 || spec.threshold > 1.0) throw SpecError("probability threshold outside [0,1]");
    } else {
        if (spec.threshold < 0.0) throw SpecError("cost threshold must be nonnegative");
        if (!model.has_costs) throw SpecError("expected-cost specification on a model without costs");
    }
    if (spec.targets.empty()) throw SpecError("target set is empty");
    for (auto t : spec.targets)
        if (t >= model.num_states) throw SpecError("target state " + std::to_string(t) + " does not exist");
}

double eval_affine(const AffineExpr& expr, const Valuation& val) {
    double r = to_double(expr.constant());
    for (const auto& [id, c] : expr.coefficients()) r += to_double(c) * val.at(id);
    return r;
}

Mdp instantiate(const ParametricMDP& model, const Valuation& val) {
    Instantiator inst(model);
    return inst.instantiate(val.dense(model.num_parameters()));
}

GraphPreservation check_graph_preserving(const ParametricMDP& model, const Valuation& val, double eps) {
    GraphPreservation out;
    for (std::size_t s = 0; s < model.actions.size(); ++s) {
        for (std::size_t a = 0; a < model.actions[s].size(); ++a) {
            for (const auto& t : model.actions[s][a].transitions) {
                if (t.probability.is_zero()) continue;
                double x = eval_affine(t.probability, val);
                // Constant entries cannot move the graph; they only need to stay positive.
                bool ok = t.probability.is_constant() ? x > 0.0 : x >= eps;
                if (!ok) out.violations.push_back({s, a, t.successor, x});
            }
        }
    }
    out.preserving = out.violations.empty();
    return out;
}

std::vector<Diagnostic> validate_model(const ParametricMDP& model, double eps) {
    std::vector<Diagnostic> out;
    auto error = [&](std::string msg) { out.push_back({Severity::Error, std::move(msg)}); };
    auto warn = [&](std::string msg) { out.push_back({Severity::Warning, std::move(msg)}); };

    if (model.num_states == 0) error("model has no states");
    if (model.actions.size() != model.num_states)
        error("model declares " + std::to_string(model.num_states) + " states but defines " +
              std::to_string(model.actions.size()));
    if (model.initial >= model.num_states) error("initial state " + std::to_string(model.initial) + " does not exist");

    std::vector<bool> referenced(model.num_parameters(), false);
    for (std::size_t s = 0; s < model.actions.size(); ++s) {
        const auto& acts = model.actions[s];
        std::string where = "state " + std::to_string(s);
        if (acts.empty()) error(where + ": A(s) empty");
        for (const auto& act : acts) {
            std::string row = where + " action " + act.name;
            if (act.cost < 0) error(row + ": negative cost");
            AffineExpr sum;
            std::set<StateId> seen;
            for (const auto& t : act.transitions) {
                if (t.successor >= model.num_states)
                    error(row + ": dangling successor " + std::to_string(t.successor));
                if (!seen.insert(t.successor).second)
                    error(row + ": duplicate successor " + std::to_string(t.successor));
                sum += t.probability;
                for (const auto& [id, c] : t.probability.coefficients()) {
                    if (id < referenced.size())
                        referenced[id] = true;
                    else
                        error(row + ": undeclared parameter #" + std::to_string(id));
                }
                if (t.probability.is_constant()) {
                    const Rational& c = t.probability.constant();
                    if (c < 0)
                        error(row + ": negative probability to " + std::to_string(t.successor));
                    else if (c > 0 && to_double(c) < eps)
                        warn(row + ": constant probability " + format_rational(c) + " to " +
                             std::to_string(t.successor) + " is below eps");
                }
            }
            if (sum != AffineExpr(1))
                error(row + ": row sum is " + sum.to_string(model.parameters) + ", not 1");
        }
    }
    for (std::size_t p = 0; p < referenced.size(); ++p)
        if (!referenced[p]) warn("parameter " + model.parameters[p] + " is unreferenced");
    for (const auto& [name, states] : model.labels)
        for (auto s : states)
            if (s >= model.num_states) error("label " + name + " refers to missing state " + std::to_string(s));
    return out;
}

bool has_errors(const std::vector<Diagnostic>& diagnostics) {
    return std::any_of(diagnostics.begin(), diagnostics.end(),
                       [](const Diagnostic& d) { return d.severity == Severity::Error; });
}

Instantiator::Instantiator(const ParametricMDP& model) : num_parameters_(model.num_parameters()) {
    mdp_.num_states = model.num_states;
    mdp_.initial = model.initial;
    mdp_.choice_begin.assign(1, 0);
    mdp_.entry_begin.assign(1, 0);
    for (std::size_t s = 0; s < model.actions.size(); ++s) {
        for (std::size_t a = 0; a < model.actions[s].size(); ++a) {
            const auto& act = model.actions[s][a];
            for (const auto& t : act.transitions) {
                if (t.probability.is_zero()) continue;
                mdp_.successor.push_back(t.successor);
                exprs_.emplace_back(t.probability);
                entry_state_.push_back(s);
                entry_action_.push_back(a);
            }
            mdp_.entry_begin.push_back(mdp_.successor.size());
            mdp_.cost.push_back(to_double(act.cost));
        }
        mdp_.choice_begin.push_back(mdp_.cost.size());
    }
    mdp_.probability.assign(mdp_.successor.size(), 0.0);
    if (num_parameters_ == 0) assign({});
}

TransitionRef Instantiator::entry_ref(std::size_t entry) const {
    return {entry_state_.at(entry), entry_action_.at(entry), mdp_.successor.at(entry), mdp_.probability.at(entry)};
}

std::vector<TransitionRef> Instantiator::assign(const std::vector<double>& values) {
    if (values.size() < num_parameters_)
        throw MissingParameter(values.size());
    std::vector<TransitionRef> bad;
    for (std::size_t e = 0; e < exprs_.size(); ++e) mdp_.probability[e] = exprs_[e].evaluate(values);
    for (std::size_t c = 0; c < mdp_.num_choices(); ++c) {
        double sum = 0.0;
        bool negative = false;
        for (std::size_t e = mdp_.entry_begin[c]; e < mdp_.entry_begin[c + 1]; ++e) {
            sum += mdp_.probability[e];
            if (mdp_.probability[e] < 0.0 || !std::isfinite(mdp_.probability[e])) {
                bad.push_back(entry_ref(e));
                negative = true;
            }
        }
        if (!negative && std::abs(sum - 1.0) > 1e-9)
            for (std::size_t e = mdp_.entry_begin[c]; e < mdp_.entry_begin[c + 1]; ++e) bad.push_back(entry_ref(e));
    }
    return bad;
}

const Mdp& Instantiator::instantiate(const std::vector<double>& values) {
    auto bad = assign(values);
    if (!bad.empty()) throw NotWellDefined(std::move(bad));
    return mdp_;
}

double Instantiator::min_entry() const {
    double m = std::numeric_limits<double>::infinity();
    for (double p : mdp_.probability) m = std::min(m, p);
    return m;
}

std::vector<double> ParameterBox::center() const {
    std::vector<double> c(lower.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (lower[i] + upper[i]);
    return c;
}

bool ParameterBox::contains(const std::vector<double>& v, double slack) const {
    if (v.size() != lower.size()) return false;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] < lower[i] - slack || v[i] > upper[i] + slack) return false;
    return true;
}

std::optional<ParameterBox> rectangular_region(const ParametricMDP& model, double eps) {
    const double inf = std::numeric_limits<double>::infinity();
    std::size_t n = model.num_parameters();
    std::vector<double> lo(n, -inf), hi(n, inf);
    for (const auto& state : model.actions) {
        for (const auto& act : state) {
            for (const auto& t : act.transitions) {
                const auto& coeffs = t.probability.coefficients();
                if (coeffs.empty()) continue;
                if (coeffs.size() > 1) return std::nullopt;
                auto [id, a] = *coeffs.begin();
                // c + a*x >= eps
                double bound = to_double((Rational(eps) - t.probability.constant()) / a);
                if (a > 0)
                    lo[id] = std::max(lo[id], bound);
                else
                    hi[id] = std::min(hi[id], bound);
            }
        }
    }
    ParameterBox box{lo, hi};
    for (std::size_t i = 0; i < n; ++i) {
        if (box.lower[i] == -inf) box.lower[i] = std::min(eps, box.upper[i]);
        if (box.upper[i] == inf) box.upper[i] = std::max(1.0 - eps, box.lower[i]);
    }
    return box;
}

}  // namespace pmdpsyn
