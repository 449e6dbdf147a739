#include "coa/cli.hpp"

int main(int argc, char** argv) { return coa::cli::main(argc, argv); }
