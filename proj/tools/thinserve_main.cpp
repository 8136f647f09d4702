#include <iostream>

#include "thinserve/cli.hpp"

int main(int argc, char** argv) {
  return thinserve::cli::run(argc, argv, std::cout, std::cerr);
}
