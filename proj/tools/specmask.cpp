#include <vector>

#include "specmask/cli.hpp"

int main(int argc, char** argv) {
  return specmask::cli_run(std::vector<std::string>(argv + 1, argv + argc));
}
