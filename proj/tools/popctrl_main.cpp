#include <iostream>
#include <string>
#include <vector>

#include "popctrl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return popctrl::run_command(args, std::cout, std::cerr);
}
