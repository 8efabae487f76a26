#include <iostream>

#include "l0recon/cli/commands.hpp"

int main(int argc, char** argv) { return l0recon::cli::run(argc, argv, std::cout, std::cerr); }
