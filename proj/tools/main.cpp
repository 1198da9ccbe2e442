#include "quadfit/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return quadfit::cli::run(argc, argv, std::cout, std::cerr); }
