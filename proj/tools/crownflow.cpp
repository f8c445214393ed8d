#include <iostream>
#include <string>
#include <vector>

#include "crownflow/cli.hpp"

int main(int argc, char** argv) {
  return crownflow::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
