#include <iostream>

#include "mjscc/cli.hpp"

int main(int argc, char** argv) { return mjscc::cli::run(argc, argv, std::cout, std::cerr); }
