#include <iostream>

#include "eercf/cli.hpp"

int main(int argc, char** argv) {
  return eercf::cli::run(argc, argv, std::cout, std::cerr);
}
