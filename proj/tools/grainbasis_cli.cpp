#include <iostream>

#include "grainbasis/cli.hpp"

int main(int argc, char** argv) { return grainbasis::cli::run_cli(argc, argv, std::cout, std::cerr); }
