#include <iostream>

#include "shufflerl/cli/commands.hpp"

int main(int argc, char** argv) {
  return shufflerl::cli::run_cli(argc, argv, std::cout, std::cerr);
}
