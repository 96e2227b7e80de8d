// Command-line entry point. Subcommands are filled in alongside the library
// modules; see README.md for usage.

#include <cstdio>

int main() {
  std::fprintf(stderr, "tsk: no subcommand (CLI under construction)\n");
  return 2;
}
