#include "cli.hpp"

int main(int argc, char** argv) { return energylens::cli::run_cli(argc, argv); }
