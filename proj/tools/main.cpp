#include "coadapt/cli.hpp"

int main(int argc, char** argv) { return coadapt::cli_main(argc, argv); }
