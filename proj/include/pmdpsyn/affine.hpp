#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace pmdpsyn {

using Rational = boost::multiprecision::cpp_rational;
using ParamId = std::size_t;

/// Parses "a/b", "12", "-0.25", "1e-3" into an exact rational. Throws std::invalid_argument.
Rational parse_rational(const std::string& text);

/// Shortest exact textual form: integer or "num/den".
std::string format_rational(const Rational& r);

double to_double(const Rational& r);

/// constant + sum_x coeff(x) * x, kept canonical: no zero coefficients are stored,
/// so two expressions are equal iff their maps and constants are equal.
class AffineExpr {
   public:
    AffineExpr() = default;
    explicit AffineExpr(Rational constant) : constant_(std::move(constant)) {}

    static AffineExpr parameter(ParamId id, Rational coeff = 1);

    const Rational& constant() const { return constant_; }
    const std::map<ParamId, Rational>& coefficients() const { return coefficients_; }

    bool is_constant() const { return coefficients_.empty(); }
    bool is_zero() const { return coefficients_.empty() && constant_ == 0; }

    AffineExpr& operator+=(const AffineExpr& other);
    AffineExpr& operator-=(const AffineExpr& other);
    AffineExpr& operator*=(const Rational& factor);
    friend AffineExpr operator+(AffineExpr a, const AffineExpr& b) { return a += b; }
    friend AffineExpr operator-(AffineExpr a, const AffineExpr& b) { return a -= b; }
    friend AffineExpr operator*(AffineExpr a, const Rational& f) { return a *= f; }

    void add_term(ParamId id, const Rational& coeff);
    void add_constant(const Rational& c) { constant_ += c; }

    bool operator==(const AffineExpr& other) const = default;

    /// Exact evaluation over a dense vector of rational parameter values.
    Rational evaluate_exact(const std::vector<Rational>& values) const;

    std::string to_string(const std::vector<std::string>& names) const;

   private:
    Rational constant_ = 0;
    std::map<ParamId, Rational> coefficients_;
};

/// Floating-point image of an AffineExpr, used on solver and model-checker hot paths.
struct DoubleAffine {
    double constant = 0.0;
    std::vector<std::pair<ParamId, double>> terms;

    explicit DoubleAffine(const AffineExpr& e);
    DoubleAffine() = default;

    double evaluate(const std::vector<double>& values) const {
        double r = constant;
        for (const auto& [id, c] : terms) r += c * values[id];
        return r;
    }
};

}  // namespace pmdpsyn
