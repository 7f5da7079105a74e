#include <iostream>
#include <string>
#include <vector>

#include "anyshot/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return anyshot::cli_run(std::move(args), std::cout, std::cerr);
}
