#include "hypergrad/bench.hpp"

int main(int argc, char** argv) { return hypergrad::cli_main(argc, argv); }
