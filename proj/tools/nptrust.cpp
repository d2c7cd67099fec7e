#include <iostream>
#include <string>
#include <vector>

#include "nptrust/cli.hpp"

int main(int argc, char** argv) {
  return nptrust::run_cli(std::vector<std::string>(argv, argv + argc),
                          std::cout, std::cerr);
}
