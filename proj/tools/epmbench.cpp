#include "epmbench/cli.hpp"

int main(int argc, char** argv) { return epmbench::cli::main(argc, argv); }
