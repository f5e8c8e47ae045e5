#include <iostream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "mmem/cli.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Tapes allocate and free many mid-sized matrices per bag; returning that
  // memory to the kernel after every bag costs more than the arithmetic.
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
#endif
  std::vector<std::string> args(argv + 1, argv + argc);
  return mmem::run_cli(args, std::cout, std::cerr);
}
