#include <iostream>

#include "prmim/cli.hpp"

int main(int argc, char** argv) { return prmim::run_cli(argc, argv, std::cout, std::cerr); }
