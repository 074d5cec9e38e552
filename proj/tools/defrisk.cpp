#include "defrisk/cli.hpp"

int main(int argc, char** argv) { return defrisk::cli::run_cli(argc, argv); }
