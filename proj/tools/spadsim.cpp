#include "spadsim/cli.hpp"

int main(int argc, char** argv) { return spadsim::run_cli(argc, argv); }
