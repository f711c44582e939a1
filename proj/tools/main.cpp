#include <iostream>

#include "purex/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return purex::run_cli(args, std::cout, std::cerr);
}
