#include "specal/cli.hpp"

int main(int argc, char** argv) { return specal::run_cli(argc, argv); }
