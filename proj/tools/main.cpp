#include <iostream>
#include <string>
#include <vector>

#include "qcroute/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return qcroute::cli::run(args, std::cout, std::cerr);
}
