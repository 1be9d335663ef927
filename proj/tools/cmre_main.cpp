#include <string>
#include <vector>

#include "cmre/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cmre::run_cli(args);
}
