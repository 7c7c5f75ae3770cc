#include <string>
#include <vector>

#include "agepatch/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return agepatch::cli::dispatch(args).exit_code;
}
