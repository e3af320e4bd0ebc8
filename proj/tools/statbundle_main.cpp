#include "statbundle/cli.hpp"

int main(int argc, char** argv) { return statbundle::cli::run_cli(argc, argv); }
