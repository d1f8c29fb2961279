#include <iostream>
#include <string>
#include <vector>

#include "dpi/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dpi::run_cli(args, std::cout, std::cerr);
}
