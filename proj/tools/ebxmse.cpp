#include <iostream>

#include "ebxmse/cli.hpp"

int main(int argc, char **argv) { return ebxmse::run_cli(argc, argv, std::cout, std::cerr); }
