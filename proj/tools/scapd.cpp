#include "scap/cli.hpp"

int main(int argc, char** argv) { return scap::scapd_main(argc, argv); }
