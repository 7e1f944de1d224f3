#include <iostream>
#include <string>
#include <vector>

#include "cbdi/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cbdi::run_cli(args, std::cout, std::cerr);
}
