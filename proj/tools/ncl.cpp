#include <iostream>

#include "ncl/cli.hpp"

int main(int argc, char** argv) {
  return ncl::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
