#include <iostream>
#include <string>
#include <vector>

#include "medfact/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return medfact::run_cli(args, std::cout, std::cerr);
}
