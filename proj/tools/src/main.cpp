#include <iostream>

#include "bhh/cli.hpp"

int main(int argc, char** argv) { return bhh::cli::main_entry(argc, argv, std::cout, std::cerr); }
