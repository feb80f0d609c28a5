#include <iostream>

#include "hmqm/cli.hpp"

int main(int argc, char** argv) { return hmqm::cli::run(argc, argv, std::cout, std::cerr); }
