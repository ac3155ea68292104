#include <iostream>
#include <string>
#include <vector>

#include "cnet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cnet::cli_main(args, std::cout, std::cerr);
}
