#include "avsep/cli.hpp"

int main(int argc, char** argv) { return avsep::run_cli(argc, argv); }
