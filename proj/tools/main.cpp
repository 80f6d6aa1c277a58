#include <iostream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "commands.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // big activation buffers come and go every step; keep them off mmap
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  std::vector<std::string> args(argv, argv + argc);
  return nwc::cli::run(args, std::cout, std::cerr);
}
