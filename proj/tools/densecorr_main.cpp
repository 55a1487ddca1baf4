#include "densecorr/cli.hpp"

int main(int argc, char** argv) { return densecorr::run_cli(argc, argv); }
