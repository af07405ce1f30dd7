#pragma once

#include "pmdpsyn/model.hpp"

#include <string>

namespace pmdpsyn {

/// Line-oriented model format:
///
///   pmdp
///   parameters: v w
///   states: 3
///   initial: 0
///   label goal: 2
///   cost 0 go: 1/2
///   state 0
///   action go
///     1 : v
///     2 : 1 - v
///
/// Throws ParseError (with position), UnknownParameter, NonAffineModel.
ParametricMDP parse_model(const std::string& text);

/// Inverse of parse_model for models whose transitions are all nonzero.
std::string serialize_model(const ParametricMDP& model);

/// Parses an affine expression over `parameters`; `line` is used for error positions.
AffineExpr parse_affine(const std::string& text, const std::vector<std::string>& parameters, std::size_t line = 1,
                        std::size_t column_offset = 0);

/// ("P" | "E") ("<=" | ">=") number "[" "F" target... "]", where a target is a
/// label of `model` or a state id. Throws ParseError or SpecError.
Specification parse_spec(const std::string& text, const ParametricMDP& model);

std::string read_file(const std::string& path);

}  // namespace pmdpsyn
