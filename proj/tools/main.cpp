#include "cstafnet/cli.hpp"

int main(int argc, char** argv) { return cstafnet::run_cli(argc, argv); }
