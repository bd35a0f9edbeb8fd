#include <iostream>

#include "cnstat/cli.hpp"

int main(int argc, char** argv) { return cnstat::cli::dispatch(argc, argv, std::cout, std::cerr); }
