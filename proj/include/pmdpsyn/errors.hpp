#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmdpsyn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class ModelError : public Error {
   public:
    using Error::Error;
};

class MissingParameter : public ModelError {
   public:
    explicit MissingParameter(std::size_t param)
        : ModelError("valuation has no value for parameter #" + std::to_string(param)), param_(param) {}
    std::size_t parameter() const { return param_; }

   private:
    std::size_t param_;
};

/// A transition (s, action index, s'). Action indices are local to the state.
struct TransitionRef {
    std::size_t state = 0;
    std::size_t action = 0;
    std::size_t successor = 0;
    double value = 0.0;

    bool operator==(const TransitionRef&) const = default;
};

class NotWellDefined : public ModelError {
   public:
    explicit NotWellDefined(std::vector<TransitionRef> offending);
    const std::vector<TransitionRef>& offending() const { return offending_; }

   private:
    std::vector<TransitionRef> offending_;
};

class NonAffineModel : public ModelError {
   public:
    using ModelError::ModelError;
};

class SpecError : public Error {
   public:
    using Error::Error;
};

/// Syntax or name-resolution error with a 1-based source position.
class ParseError : public Error {
   public:
    ParseError(const std::string& what, std::size_t line, std::size_t column);
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

   private:
    std::size_t line_;
    std::size_t column_;
};

class UnknownParameter : public ParseError {
   public:
    UnknownParameter(const std::string& name, std::size_t line, std::size_t column)
        : ParseError("unknown parameter '" + name + "'", line, column), name_(name) {}
    const std::string& name() const { return name_; }

   private:
    std::string name_;
};

class NonConvergence : public Error {
   public:
    explicit NonConvergence(std::size_t iterations)
        : Error("value iteration did not converge within " + std::to_string(iterations) + " iterations"),
          iterations_(iterations) {}
    std::size_t iterations() const { return iterations_; }

   private:
    std::size_t iterations_;
};

class InfiniteCost : public Error {
   public:
    explicit InfiniteCost(std::vector<std::size_t> states)
        : Error("expected cost is infinite for " + std::to_string(states.size()) + " state(s)"),
          states_(std::move(states)) {}
    const std::vector<std::size_t>& states() const { return states_; }

   private:
    std::vector<std::size_t> states_;
};

/// Raised when the graph structure alone decides that no valuation can satisfy the property.
class InfeasibleTrivially : public Error {
   public:
    using Error::Error;
};

class ShapeMismatch : public Error {
   public:
    using Error::Error;
};

class NonRectangularRegion : public Error {
   public:
    using Error::Error;
};

}  // namespace pmdpsyn
