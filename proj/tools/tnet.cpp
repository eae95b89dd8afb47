#include "tnet/cli.hpp"

int main(int argc, char** argv) { return tnet::cli::main(argc, argv); }
