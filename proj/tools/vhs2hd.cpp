#include "vhs2hd/cli.hpp"

int main(int argc, char** argv) { return vhs2hd::run_cli(argc, argv); }
