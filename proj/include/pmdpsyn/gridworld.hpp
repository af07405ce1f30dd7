#pragma once

#include "pmdpsyn/model.hpp"

#include <cstdint>

namespace pmdpsyn {

/// Slippery grid pMC. Every cell has a fixed intended move east or south (east
/// on the last row, south on the last column); the move succeeds
/// with the probability of the cell's region parameter and otherwise slips west
/// or north. Moves off the grid stay put. The bottom-right cell is
/// labelled "goal", randomly placed absorbing cells "trap"; the top-left cell is
/// initial. Regions are a grid of rectangular blocks, one parameter each.
struct GridworldOptions {
    std::size_t width = 25;
    std::size_t height = 20;
    std::size_t region_cols = 5;
    std::size_t region_rows = 10;
    double trap_fraction = 0.05;
    std::uint64_t seed = 1;
};

ParametricMDP make_gridworld(const GridworldOptions& options = {});

}  // namespace pmdpsyn
