#include <iostream>

#include "story/cli.hpp"

int main(int argc, char** argv) {
  return story::run_cli(argc, argv, std::cout, std::cerr);
}
