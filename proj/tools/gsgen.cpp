#include "gsgen/workbench/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return gsgen::run_cli(argc, argv, std::cout, std::cerr); }
