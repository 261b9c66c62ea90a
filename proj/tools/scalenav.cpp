// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "scalenav/cli.hpp"

int main(int argc, char** argv) { return scalenav::cli::run(argc, argv, std::cout, std::cerr); }
