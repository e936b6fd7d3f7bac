#include <string>
#include <vector>

#include "motif/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return motif::cli::run_command(args);
}
