#include <iostream>

#include "fqme/cli.hpp"

int main(int argc, char** argv) { return fqme::run_cli(argc, argv, std::cout, std::cerr); }
