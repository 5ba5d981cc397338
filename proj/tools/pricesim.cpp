#include "pricesim/cli.hpp"

int main(int argc, char** argv) { return pricesim::cli::main(argc, argv); }
