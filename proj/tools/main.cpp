#include <iostream>

#include "wsm/cli.hpp"

int main(int argc, char** argv) {
  return wsm::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
