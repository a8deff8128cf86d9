#include <iostream>

#include "filmpipe/cli/commands.hpp"

int main(int argc, char** argv) { return filmpipe::cli::run(argc, argv, std::cout, std::cerr); }
