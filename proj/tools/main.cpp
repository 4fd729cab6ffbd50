#include <iostream>

#include "acdmcp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return acdmcp::cli::run(args, std::cout, std::cerr);
}
