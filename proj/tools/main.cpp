#include <iostream>

#include "clie/cli.hpp"

int main(int argc, char** argv) {
  return clie::cli::dispatch(argc, argv, std::cout, std::cerr);
}
