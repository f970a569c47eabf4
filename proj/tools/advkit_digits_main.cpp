#include <iostream>
#include <string>
#include <vector>

#include "advkit/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return advkit::cli::run_digits(args, std::cout, std::cerr);
}
