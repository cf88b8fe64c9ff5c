#include "mcmt/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mcmt::run_cli(argc, argv, std::cout, std::cerr); }
