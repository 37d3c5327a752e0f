#include "scap/cli.hpp"

int main(int argc, char** argv) { return scap::scap_cli_main(argc, argv); }
