#include <iostream>
#include <string>
#include <vector>

#include "kinwass/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return kinwass::run_command(args, std::cout, std::cerr);
}
