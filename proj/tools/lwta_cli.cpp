#include <iostream>

#include "lwta/cli.hpp"

int main(int argc, char** argv) { return lwta::cli::run(argc, argv, std::cout, std::cerr); }
