#include "m2t/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return m2t::run_cli(argc, argv, std::cout, std::cerr); }
