#include "s2a/cli.hpp"

int main(int argc, char** argv) { return s2a::cli::run(argc, argv); }
