#include "soyo/cli.hpp"

int main(int argc, char** argv) { return soyo::cli::cli_main(argc, argv); }
