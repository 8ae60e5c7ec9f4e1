#include "mft/cli.hpp"

int main(int argc, char** argv) { return mft::cli_main(argc, argv); }
