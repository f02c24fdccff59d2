#include <iostream>

#include "cobra/cli.hpp"

int main(int argc, char** argv) { return cobra::cli::run(argc, argv, std::cout, std::cerr); }
