#include "vgcn/cli.hpp"

int main(int argc, char** argv) {
  return vgcn::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
