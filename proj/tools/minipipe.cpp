#include "minipipe/cli.hpp"

int main(int argc, char** argv) { return minipipe::run_cli(argc, argv); }
