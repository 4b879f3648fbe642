#include <iostream>
#include <string>
#include <vector>

#include "attnaudit/cli.hpp"

int main(int argc, char** argv) {
  return attnaudit::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
