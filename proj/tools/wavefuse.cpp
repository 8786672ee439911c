// Placeholder entry point; subcommands are wired up once the pipeline
// modules land.
#include <cstdio>

int main() {
  std::puts("wavefuse: not yet wired");
  return 2;
}
