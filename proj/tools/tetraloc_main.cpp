#include <string>
#include <vector>

#include "tetraloc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return tetraloc::run_cli(args);
}
