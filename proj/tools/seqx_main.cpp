#include "seqx/cli.hpp"
#include "seqx/runtime.hpp"

int main(int argc, char** argv) {
  seqx::tune_allocator();
  return seqx::run_cli(argc, argv);
}
