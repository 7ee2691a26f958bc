#include <malloc.h>

#include <iostream>

#include "reach/cli.hpp"

int main(int argc, char** argv) {
  // Training allocates many same-sized batch matrices; keep them on the heap
  // instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
  return reach::run_cli(argc, argv, std::cout, std::cerr);
}
