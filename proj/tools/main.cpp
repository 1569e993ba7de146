#include "cli.hpp"

int main(int argc, char** argv) { return probcontour::cli::run_cli(argc, argv); }
