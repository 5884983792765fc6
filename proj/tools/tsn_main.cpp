#include "tsn/cli.hpp"

int main(int argc, char** argv) { return tsn::run_cli(argc, argv); }
