#include <iostream>
#include <string>
#include <vector>

#include "chatter/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return chatter::cli::run(args, std::cout, std::cerr);
}
