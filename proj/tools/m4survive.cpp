#include "m4s/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return m4s::run_cli(args, std::cout, std::cerr);
}
