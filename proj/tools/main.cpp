#include "mdn_cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mdn::cli::run(std::move(args));
}
