#include "cuatree/cli.hpp"

int main(int argc, char** argv) { return cuatree::cli_main(argc, argv); }
