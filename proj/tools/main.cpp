#include <iostream>

#include "adi/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return adi::cli::run_cli(args, std::cout, std::cerr);
}
