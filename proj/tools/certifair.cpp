#include <iostream>

#include "certifair/cli.hpp"

int main(int argc, char** argv) { return certifair::cli::run(argc, argv, std::cout, std::cerr); }
