#include <iostream>

#include "lorashift/cli.hpp"

int main(int argc, char** argv) { return lorashift::run_cli(argc, argv, std::cout, std::cerr); }
