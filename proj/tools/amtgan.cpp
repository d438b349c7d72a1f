#include <iostream>

#include "amtgan/cli.hpp"

int main(int argc, char** argv) { return amtgan::cli::run(argc, argv, std::cout, std::cerr); }
