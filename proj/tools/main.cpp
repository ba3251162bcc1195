#include "cli.hpp"

int main(int argc, char** argv) { return dynsig::cli::run(argc, argv); }
