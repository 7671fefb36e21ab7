#include "shrubmap/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
  return shrubmap::cli::run(argc, argv, std::cout, std::cerr);
}
