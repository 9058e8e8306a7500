#include "abund/cli.hpp"

int main(int argc, char** argv) { return abund::run_cli(argc, argv); }
