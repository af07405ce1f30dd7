#pragma once

#include "pmdpsyn/model.hpp"
#include "pmdpsyn/synthesis.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pmdpsyn {

inline constexpr const char* kToolName = "pmdpsyn";
inline constexpr const char* kToolVersion = "0.1.0";

enum class Method { Ccp, Scp, ScpRegularized, Pso };

const char* to_string(Method m);
/// "ccp", "scp", "scp-reg" or "pso"; throws std::invalid_argument otherwise.
Method parse_method(const std::string& name);

struct RunOptions {
    std::string model_path;
    std::string spec;
    Method method = Method::Ccp;
    double eps_graph = 1e-6;
    std::uint64_t seed = 0;
    std::optional<std::size_t> max_iters;
    std::optional<double> tau0;
    std::optional<double> tau_max;
    std::optional<double> delta0;
    std::optional<double> gamma;
    std::optional<double> omega;
    std::optional<double> time_limit;  // seconds
    SolverMethod solver = SolverMethod::InteriorPoint;
    bool oracle_check = false;
};

struct RunArtifacts {
    SynthesisOutcome outcome;
    std::string result;  // JSON document, keys sorted
    std::string trace;   // CSV, one row per iteration
    bool oracle_agrees = true;
};

/// RFC-4180 field: quoted when it holds a comma, quote, CR or LF.
std::string csv_field(const std::string& text);
/// Header iter,objective,mc_value,penalty_sum,delta,tau,accepted; NaN cells are empty.
std::string trace_csv(const SynthesisOutcome& outcome);

/// Runs one synthesis and assembles its artifacts. Throws pmdpsyn::Error.
RunArtifacts run_synthesis(const ParametricMDP& model, const Specification& spec, const RunOptions& options);

/// Command-line entry point; `args` excludes the program name.
/// Returns 0 when a valuation was certified, 2 when none was found, 1 on error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pmdpsyn
