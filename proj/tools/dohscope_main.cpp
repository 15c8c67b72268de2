#include <cstdio>

int main() {
  std::puts("dohscope: subcommands pending");
  return 2;
}
