#include <string>
#include <vector>

#include "argossm/harness.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return argossm::harness::run_cli(args);
}
