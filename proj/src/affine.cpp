#include "pmdpsyn/affine.hpp"

#include <cctype>
#include <stdexcept>

namespace pmdpsyn {

namespace {

using boost::multiprecision::cpp_int;

cpp_int pow10(long exponent) {
    cpp_int r = 1;
    for (long i = 0; i < exponent; ++i) r *= 10;
    return r;
}

Rational parse_decimal(const std::string& text) {
    std::size_t i = 0;
    bool negative = false;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
        negative = text[i] == '-';
        ++i;
    }
    cpp_int digits = 0;
    long scale = 0;
    bool any_digit = false;
    bool seen_point = false;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            digits = digits * 10 + (c - '0');
            any_digit = true;
            if (seen_point) ++scale;
        } else if (c == '.' && !seen_point) {
            seen_point = true;
        } else {
            break;
        }
    }
    if (!any_digit) throw std::invalid_argument("malformed number '" + text + "'");
    long exponent = 0;
    if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
        ++i;
        bool exp_negative = false;
        if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
            exp_negative = text[i] == '-';
            ++i;
        }
        bool any_exp = false;
        for (; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i) {
            exponent = exponent * 10 + (text[i] - '0');
            any_exp = true;
            if (exponent > 4000) throw std::invalid_argument("exponent out of range in '" + text + "'");
        }
        if (!any_exp) throw std::invalid_argument("malformed exponent in '" + text + "'");
        if (exp_negative) exponent = -exponent;
    }
    if (i != text.size()) throw std::invalid_argument("malformed number '" + text + "'");
    long net = exponent - scale;
    Rational r = net >= 0 ? Rational(digits * pow10(net)) : Rational(digits, pow10(-net));
    return negative ? Rational(-r) : r;
}

}  // namespace

Rational parse_rational(const std::string& text) {
    auto slash = text.find('/');
    if (slash == std::string::npos) return parse_decimal(text);
    Rational num = parse_decimal(text.substr(0, slash));
    Rational den = parse_decimal(text.substr(slash + 1));
    if (den == 0) throw std::invalid_argument("zero denominator in '" + text + "'");
    return num / den;
}

std::string format_rational(const Rational& r) {
    auto num = boost::multiprecision::numerator(r);
    auto den = boost::multiprecision::denominator(r);
    if (den == 1) return num.str();
    return num.str() + "/" + den.str();
}

double to_double(const Rational& r) { return r.convert_to<double>(); }

AffineExpr AffineExpr::parameter(ParamId id, Rational coeff) {
    AffineExpr e;
    e.add_term(id, coeff);
    return e;
}

void AffineExpr::add_term(ParamId id, const Rational& coeff) {
    if (coeff == 0) return;
    auto [it, inserted] = coefficients_.try_emplace(id, coeff);
    if (!inserted) {
        it->second += coeff;
        if (it->second == 0) coefficients_.erase(it);
    }
}

AffineExpr& AffineExpr::operator+=(const AffineExpr& other) {
    constant_ += other.constant_;
    for (const auto& [id, c] : other.coefficients_) add_term(id, c);
    return *this;
}

AffineExpr& AffineExpr::operator-=(const AffineExpr& other) {
    constant_ -= other.constant_;
    for (const auto& [id, c] : other.coefficients_) add_term(id, -c);
    return *this;
}

AffineExpr& AffineExpr::operator*=(const Rational& factor) {
    if (factor == 0) {
        constant_ = 0;
        coefficients_.clear();
        return *this;
    }
    constant_ *= factor;
    for (auto& [id, c] : coefficients_) c *= factor;
    return *this;
}

Rational AffineExpr::evaluate_exact(const std::vector<Rational>& values) const {
    Rational r = constant_;
    for (const auto& [id, c] : coefficients_) r += c * values.at(id);
    return r;
}

std::string AffineExpr::to_string(const std::vector<std::string>& names) const {
    std::string out;
    bool first = true;
    if (constant_ != 0 || coefficients_.empty()) {
        out = format_rational(constant_);
        first = false;
    }
    for (const auto& [id, c] : coefficients_) {
        Rational magnitude = c < 0 ? Rational(-c) : c;
        if (first) {
            if (c < 0) out += "-";
        } else {
            out += c < 0 ? " - " : " + ";
        }
        if (magnitude != 1) out += format_rational(magnitude) + "*";
        out += names.at(id);
        first = false;
    }
    return out;
}

DoubleAffine::DoubleAffine(const AffineExpr& e) : constant(to_double(e.constant())) {
    terms.reserve(e.coefficients().size());
    for (const auto& [id, c] : e.coefficients()) terms.emplace_back(id, to_double(c));
}

}  // namespace pmdpsyn
