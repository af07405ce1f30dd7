#include "pmdpsyn/io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace pmdpsyn {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

bool is_identifier(const std::string& s) {
    return !s.empty() && ident_start(s[0]) && std::all_of(s.begin(), s.end(), ident_char);
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Token {
    enum Kind { Number, Ident, Plus, Minus, Star, End } kind;
    std::string text;
    std::size_t column;  // 1-based within the expression
};

// number: digits [. digits] [e[+-]digits] [/ same]
std::size_t scan_decimal(const std::string& s, std::size_t i) {
    std::size_t j = i;
    while (j < s.size() && (digit(s[j]) || s[j] == '.')) ++j;
    if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
        if (k < s.size() && digit(s[k])) {
            while (k < s.size() && digit(s[k])) ++k;
            j = k;
        }
    }
    return j;
}

std::vector<Token> tokenize(const std::string& s, std::size_t line, std::size_t offset) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (c == ' ' || c == '\t') {
            ++i;
        } else if (c == '+') {
            out.push_back({Token::Plus, "+", i + 1});
            ++i;
        } else if (c == '-') {
            out.push_back({Token::Minus, "-", i + 1});
            ++i;
        } else if (c == '*') {
            out.push_back({Token::Star, "*", i + 1});
            ++i;
        } else if (digit(c) || c == '.') {
            std::size_t j = scan_decimal(s, i);
            if (j < s.size() && s[j] == '/') j = scan_decimal(s, j + 1);
            out.push_back({Token::Number, s.substr(i, j - i), i + 1});
            i = j;
        } else if (ident_start(c)) {
            std::size_t j = i;
            while (j < s.size() && ident_char(s[j])) ++j;
            out.push_back({Token::Ident, s.substr(i, j - i), i + 1});
            i = j;
        } else {
            throw ParseError(std::string("unexpected character '") + c + "'", line, offset + i + 1);
        }
    }
    out.push_back({Token::End, "", s.size() + 1});
    return out;
}

}  // namespace

AffineExpr parse_affine(const std::string& text, const std::vector<std::string>& parameters, std::size_t line,
                        std::size_t offset) {
    auto toks = tokenize(text, line, offset);
    std::size_t pos = 0;
    auto col = [&](const Token& t) { return offset + t.column; };
    AffineExpr result;
    bool first = true;
    while (true) {
        Rational sign = 1;
        const Token& t0 = toks[pos];
        if (t0.kind == Token::Plus || t0.kind == Token::Minus) {
            sign = t0.kind == Token::Minus ? -1 : 1;
            ++pos;
        } else if (!first) {
            break;
        }
        if (toks[pos].kind == Token::End) throw ParseError("expected a term", line, col(toks[pos]));
        // term := factor (* factor)*
        Rational coeff = sign;
        std::optional<ParamId> param;
        std::string param_name;
        while (true) {
            const Token& f = toks[pos];
            if (f.kind == Token::Number) {
                try {
                    coeff *= parse_rational(f.text);
                } catch (const std::invalid_argument& e) {
                    throw ParseError(e.what(), line, col(f));
                }
            } else if (f.kind == Token::Ident) {
                auto it = std::find(parameters.begin(), parameters.end(), f.text);
                if (it == parameters.end()) throw UnknownParameter(f.text, line, col(f));
                if (param)
                    throw NonAffineModel("line " + std::to_string(line) + ": product " + param_name + "*" + f.text +
                                         " is not affine");
                param = static_cast<ParamId>(it - parameters.begin());
                param_name = f.text;
            } else {
                throw ParseError("expected a number or parameter", line, col(f));
            }
            ++pos;
            if (toks[pos].kind != Token::Star) break;
            ++pos;
        }
        if (param)
            result.add_term(*param, coeff);
        else
            result.add_constant(coeff);
        first = false;
        if (toks[pos].kind == Token::End) break;
        if (toks[pos].kind != Token::Plus && toks[pos].kind != Token::Minus)
            throw ParseError("expected '+' or '-'", line, col(toks[pos]));
    }
    if (toks[pos].kind != Token::End) throw ParseError("unexpected trailing input", line, col(toks[pos]));
    return result;
}

namespace {

std::size_t parse_index(const std::string& tok, std::size_t line, std::size_t column) {
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), digit))
        throw ParseError("expected a nonnegative integer, got '" + tok + "'", line, column);
    try {
        return std::stoul(tok);
    } catch (const std::exception&) {
        throw ParseError("integer out of range '" + tok + "'", line, column);
    }
}

// whitespace-separated words with their 1-based columns
std::vector<std::pair<std::string, std::size_t>> words(const std::string& s, std::size_t start = 0) {
    std::vector<std::pair<std::string, std::size_t>> out;
    std::size_t i = start;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        if (i >= s.size()) break;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
        out.emplace_back(s.substr(i, j - i), i + 1);
        i = j;
    }
    return out;
}

}  // namespace

ParametricMDP parse_model(const std::string& text) {
    ParametricMDP m;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    bool header = false, have_states = false, have_initial = false, have_params = false;
    std::ptrdiff_t cur_state = -1;
    std::vector<bool> state_seen;
    struct PendingCost {
        std::size_t state;
        std::string action;
        Rational value;
        std::size_t line;
    };
    std::vector<PendingCost> costs;

    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw.substr(0, raw.find('#'));
        if (trim(line).empty()) continue;
        std::size_t indent = line.find_first_not_of(" \t");
        auto w = words(line);
        const std::string& kw = w[0].first;
        if (!header) {
            if (trim(line) != "pmdp") throw ParseError("expected 'pmdp' header", line_no, indent + 1);
            header = true;
            continue;
        }
        auto colon = line.find(':');
        if (kw == "parameters:" || (kw == "parameters" && w.size() > 1 && w[1].first == ":")) {
            if (have_params) throw ParseError("duplicate parameters line", line_no, indent + 1);
            for (const auto& [name, c] : words(line, colon + 1)) {
                if (!is_identifier(name)) throw ParseError("invalid parameter name '" + name + "'", line_no, c);
                if (m.parameter_index(name)) throw ParseError("duplicate parameter '" + name + "'", line_no, c);
                m.parameters.push_back(name);
            }
            have_params = true;
        } else if (kw == "states:") {
            if (have_states) throw ParseError("duplicate states line", line_no, indent + 1);
            if (w.size() != 2) throw ParseError("expected 'states: <count>'", line_no, indent + 1);
            m.num_states = parse_index(w[1].first, line_no, w[1].second);
            m.actions.assign(m.num_states, {});
            state_seen.assign(m.num_states, false);
            have_states = true;
        } else if (kw == "initial:") {
            if (w.size() != 2) throw ParseError("expected 'initial: <state>'", line_no, indent + 1);
            m.initial = parse_index(w[1].first, line_no, w[1].second);
            have_initial = true;
        } else if (kw == "label") {
            if (colon == std::string::npos) throw ParseError("expected 'label <name>: <states>'", line_no, indent + 1);
            auto head = words(line.substr(0, colon));
            if (head.size() != 2 || !is_identifier(head[1].first))
                throw ParseError("expected 'label <name>: <states>'", line_no, indent + 1);
            auto& states = m.labels[head[1].first];
            for (const auto& [tok, c] : words(line, colon + 1)) states.push_back(parse_index(tok, line_no, c));
            std::sort(states.begin(), states.end());
            states.erase(std::unique(states.begin(), states.end()), states.end());
        } else if (kw == "cost") {
            if (colon == std::string::npos) throw ParseError("expected 'cost <state> <action>: <value>'", line_no, indent + 1);
            auto head = words(line.substr(0, colon));
            if (head.size() != 3) throw ParseError("expected 'cost <state> <action>: <value>'", line_no, indent + 1);
            std::size_t s = parse_index(head[1].first, line_no, head[1].second);
            std::string value = trim(line.substr(colon + 1));
            Rational c;
            try {
                c = parse_rational(value);
            } catch (const std::invalid_argument& e) {
                throw ParseError(e.what(), line_no, colon + 2);
            }
            costs.push_back({s, head[2].first, c, line_no});
            m.has_costs = true;
        } else if (kw == "state") {
            if (!have_states) throw ParseError("'states:' must precede state blocks", line_no, indent + 1);
            if (w.size() != 2) throw ParseError("expected 'state <id>'", line_no, indent + 1);
            std::size_t s = parse_index(w[1].first, line_no, w[1].second);
            if (s >= m.num_states) throw ParseError("state " + std::to_string(s) + " out of range", line_no, w[1].second);
            if (state_seen[s]) throw ParseError("duplicate block for state " + std::to_string(s), line_no, w[1].second);
            state_seen[s] = true;
            cur_state = static_cast<std::ptrdiff_t>(s);
        } else if (kw == "action") {
            if (cur_state < 0) throw ParseError("action outside a state block", line_no, indent + 1);
            if (w.size() != 2 || !is_identifier(w[1].first)) throw ParseError("expected 'action <name>'", line_no, indent + 1);
            auto& acts = m.actions[static_cast<std::size_t>(cur_state)];
            for (const auto& a : acts)
                if (a.name == w[1].first) throw ParseError("duplicate action '" + a.name + "'", line_no, w[1].second);
            acts.push_back({w[1].first, {}, 0});
        } else if (colon != std::string::npos && digit(kw[0])) {
            if (cur_state < 0 || m.actions[static_cast<std::size_t>(cur_state)].empty())
                throw ParseError("transition outside an action block", line_no, indent + 1);
            std::string succ_text = trim(line.substr(0, colon));
            std::size_t succ = parse_index(succ_text, line_no, indent + 1);
            AffineExpr e = parse_affine(line.substr(colon + 1), m.parameters, line_no, colon + 1);
            auto& act = m.actions[static_cast<std::size_t>(cur_state)].back();
            for (const auto& t : act.transitions)
                if (t.successor == succ)
                    throw ParseError("duplicate successor " + std::to_string(succ), line_no, indent + 1);
            if (!e.is_zero()) act.transitions.push_back({succ, std::move(e)});
        } else {
            throw ParseError("unrecognised line", line_no, indent + 1);
        }
    }
    if (!header) throw ParseError("empty model", line_no + 1, 1);
    if (!have_states) throw ParseError("missing 'states:' line", line_no + 1, 1);
    if (!have_initial) throw ParseError("missing 'initial:' line", line_no + 1, 1);
    for (const auto& c : costs) {
        if (c.state >= m.num_states) throw ParseError("cost for missing state " + std::to_string(c.state), c.line, 1);
        auto& acts = m.actions[c.state];
        auto it = std::find_if(acts.begin(), acts.end(), [&](const Action& a) { return a.name == c.action; });
        if (it == acts.end()) throw ParseError("cost for unknown action '" + c.action + "'", c.line, 1);
        it->cost = c.value;
    }
    return m;
}

std::string serialize_model(const ParametricMDP& m) {
    std::ostringstream os;
    os << "pmdp\nparameters:";
    for (const auto& p : m.parameters) os << ' ' << p;
    os << "\nstates: " << m.num_states << "\ninitial: " << m.initial << "\n";
    for (const auto& [name, states] : m.labels) {
        os << "label " << name << ":";
        for (auto s : states) os << ' ' << s;
        os << "\n";
    }
    if (m.has_costs)
        for (std::size_t s = 0; s < m.actions.size(); ++s)
            for (const auto& a : m.actions[s]) os << "cost " << s << ' ' << a.name << ": " << format_rational(a.cost) << "\n";
    for (std::size_t s = 0; s < m.actions.size(); ++s) {
        os << "state " << s << "\n";
        for (const auto& a : m.actions[s]) {
            os << "action " << a.name << "\n";
            for (const auto& t : a.transitions) os << "  " << t.successor << " : " << t.probability.to_string(m.parameters) << "\n";
        }
    }
    return os.str();
}

Specification parse_spec(const std::string& text, const ParametricMDP& model) {
    Specification spec;
    std::size_t i = 0;
    auto skip = [&] {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    };
    auto fail = [&](const std::string& what) -> ParseError { return ParseError(what, 1, i + 1); };
    skip();
    if (i >= text.size() || (text[i] != 'P' && text[i] != 'E')) throw fail("expected 'P' or 'E'");
    spec.kind = text[i] == 'P' ? SpecKind::ReachProbability : SpecKind::ExpectedCost;
    ++i;
    skip();
    if (text.compare(i, 2, "<=") == 0)
        spec.direction = Direction::AtMost;
    else if (text.compare(i, 2, ">=") == 0)
        spec.direction = Direction::AtLeast;
    else
        throw fail("expected '<=' or '>='");
    i += 2;
    skip();
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) && text[i] != '[') ++i;
    try {
        spec.threshold = to_double(parse_rational(text.substr(start, i - start)));
    } catch (const std::invalid_argument&) {
        i = start;
        throw fail("malformed threshold");
    }
    skip();
    if (i >= text.size() || text[i] != '[') throw fail("expected '['");
    ++i;
    skip();
    if (i >= text.size() || text[i] != 'F') throw fail("expected 'F'");
    ++i;
    if (i < text.size() && ident_char(text[i])) throw fail("expected whitespace after 'F'");
    auto close = text.find(']', i);
    if (close == std::string::npos) throw fail("expected ']'");
    std::set<StateId> targets;
    for (const auto& [tok, c] : words(text.substr(0, close), i)) {
        if (std::all_of(tok.begin(), tok.end(), digit)) {
            std::size_t s = parse_index(tok, 1, c);
            if (s >= model.num_states) throw SpecError("state " + tok + " does not exist");
            targets.insert(s);
        } else {
            auto it = model.labels.find(tok);
            if (it == model.labels.end()) throw SpecError("unknown label '" + tok + "'");
            targets.insert(it->second.begin(), it->second.end());
        }
    }
    i = close + 1;
    skip();
    if (i != text.size()) throw fail("unexpected trailing input");
    spec.targets.assign(targets.begin(), targets.end());
    if (spec.targets.empty()) throw SpecError("empty target set");
    return spec;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace pmdpsyn
