#include "vts/cli.hpp"

int main(int argc, char** argv) { return vts::cli::run_cli(argc, argv); }
