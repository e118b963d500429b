#include <string>
#include <vector>

#include "frec/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return frec::cli::run(std::move(args));
}
