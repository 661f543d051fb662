#include "cpd/cli.hpp"

int main(int argc, char** argv) { return cpd::cli_main(argc, argv); }
