#include <iostream>

#include "aida/cli.hpp"

int main(int argc, char** argv) { return aida::cli::run(argc, argv, std::cout, std::cerr); }
