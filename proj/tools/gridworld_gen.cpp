// Writes a slippery gridworld pMC in the model file format to standard output.
#include "pmdpsyn/gridworld.hpp"
#include "pmdpsyn/io.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    pmdpsyn::GridworldOptions o;
    CLI::App app{"Slippery gridworld generator", "gridworld_gen"};
    app.add_option("--width", o.width, "columns")->check(CLI::PositiveNumber);
    app.add_option("--height", o.height, "rows")->check(CLI::PositiveNumber);
    app.add_option("--region-cols", o.region_cols, "parameter regions per row")->check(CLI::PositiveNumber);
    app.add_option("--region-rows", o.region_rows, "parameter regions per column")->check(CLI::PositiveNumber);
    app.add_option("--trap-fraction", o.trap_fraction, "share of trap cells")->check(CLI::Range(0.0, 1.0));
    app.add_option("--seed", o.seed, "trap placement seed");
    CLI11_PARSE(app, argc, argv);
    try {
        std::cout << pmdpsyn::serialize_model(pmdpsyn::make_gridworld(o));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
