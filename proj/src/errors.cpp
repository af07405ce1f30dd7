#include "pmdpsyn/errors.hpp"

namespace pmdpsyn {

namespace {

std::string describe(const std::vector<TransitionRef>& refs) {
    std::string out = "instantiation is not a well-defined MDP:";
    std::size_t shown = 0;
    for (const auto& r : refs) {
        if (shown++ == 8) {
            out += " ...";
            break;
        }
        out += " (" + std::to_string(r.state) + "," + std::to_string(r.action) + "," + std::to_string(r.successor) +
               ")=" + std::to_string(r.value);
    }
    return out;
}

}  // namespace

NotWellDefined::NotWellDefined(std::vector<TransitionRef> offending)
    : ModelError(describe(offending)), offending_(std::move(offending)) {}

ParseError::ParseError(const std::string& what, std::size_t line, std::size_t column)
    : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + what), line_(line), column_(column) {}

}  // namespace pmdpsyn
