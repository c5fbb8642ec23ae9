#include <vector>

#include "llmregress/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return llmregress::cli::cli_main(args);
}
