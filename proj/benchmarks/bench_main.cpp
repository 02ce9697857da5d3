#include <benchmark/benchmark.h>

// Own main: the distro libbenchmark_main.a ships LTO bytecode from another GCC.
BENCHMARK_MAIN();
