#include <iostream>

#include "snewton/cli_app.hpp"

int main(int argc, char** argv) {
  return snewton::cli_main(argc, argv, std::cout, std::cerr);
}
