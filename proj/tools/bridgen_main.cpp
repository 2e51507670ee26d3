#include "bridgen/cli.hpp"

int main(int argc, char** argv) { return bridgen::cli::run(argc, argv); }
