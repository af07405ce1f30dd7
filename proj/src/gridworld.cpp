#include "pmdpsyn/gridworld.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace pmdpsyn {

ParametricMDP make_gridworld(const GridworldOptions& o) {
    if (o.width == 0 || o.height == 0 || o.region_cols == 0 || o.region_rows == 0)
        throw ModelError("gridworld dimensions must be positive");
    std::mt19937_64 rng(o.seed);
    const std::size_t n = o.width * o.height;
    const StateId goal = n - 1;
    auto id = [&](std::size_t x, std::size_t y) { return y * o.width + x; };

    ParametricMDP m;
    m.num_states = n;
    m.initial = 0;
    for (std::size_t r = 0; r < o.region_cols * o.region_rows; ++r) m.parameters.push_back("x" + std::to_string(r));

    std::set<StateId> traps;
    auto want = static_cast<std::size_t>(o.trap_fraction * static_cast<double>(n));
    std::uniform_int_distribution<StateId> cell(0, n - 1);
    while (traps.size() < std::min(want, n > 2 ? n - 2 : 0)) {
        StateId s = cell(rng);
        if (s != goal && s != m.initial) traps.insert(s);
    }
    m.labels["goal"] = {goal};
    m.labels["trap"] = std::vector<StateId>(traps.begin(), traps.end());

    // east, south, west, north
    const int dx[4] = {1, 0, -1, 0};
    const int dy[4] = {0, 1, 0, -1};
    auto step = [&](std::size_t x, std::size_t y, int d) {
        long nx = static_cast<long>(x) + dx[d], ny = static_cast<long>(y) + dy[d];
        if (nx < 0 || ny < 0 || nx >= static_cast<long>(o.width) || ny >= static_cast<long>(o.height)) return id(x, y);
        return id(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny));
    };

    m.actions.resize(n);
    std::uniform_int_distribution<int> forward(0, 1), back(2, 3);
    for (std::size_t y = 0; y < o.height; ++y)
        for (std::size_t x = 0; x < o.width; ++x) {
            StateId s = id(x, y);
            Action a;
            a.name = "go";
            if (s == goal || traps.count(s)) {
                a.transitions.push_back({s, AffineExpr(Rational(1))});
                m.actions[s].push_back(std::move(a));
                continue;
            }
            int d = forward(rng), slip = back(rng);
            if (y + 1 == o.height) d = 0;
            if (x + 1 == o.width) d = 1;
            std::size_t bx = std::min(x * o.region_cols / o.width, o.region_cols - 1);
            std::size_t by = std::min(y * o.region_rows / o.height, o.region_rows - 1);
            ParamId p = by * o.region_cols + bx;
            StateId to = step(x, y, d), off = step(x, y, slip);
            if (to == off) {
                a.transitions.push_back({to, AffineExpr(Rational(1))});
            } else {
                a.transitions.push_back({to, AffineExpr::parameter(p)});
                a.transitions.push_back({off, AffineExpr(Rational(1)) - AffineExpr::parameter(p)});
            }
            m.actions[s].push_back(std::move(a));
        }
    return m;
}

}  // namespace pmdpsyn
