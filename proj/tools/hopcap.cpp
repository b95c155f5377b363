#include <iostream>

#include "hopcap/cli.hpp"

int main(int argc, char** argv) { return hopcap::cli::run(argc, argv, std::cout, std::cerr); }
