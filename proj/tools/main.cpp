#include <iostream>

#include "active_mocap/cli.hpp"

int main(int argc, char** argv) { return active_mocap::cli::run(argc, argv, std::cout, std::cerr); }
