#include <iostream>

#include "fcnt/cli.hpp"

int main(int argc, char** argv) {
  return fcnt::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
