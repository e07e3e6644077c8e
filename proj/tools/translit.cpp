#include <iostream>

#include "translit/cli.hpp"

int main(int argc, char** argv) { return translit::cli::run(argc, argv, std::cin, std::cout, std::cerr); }
