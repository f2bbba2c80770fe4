#include "gpmatch/cli.hpp"

int main(int argc, char** argv) { return gpmatch::cli::run(argc, argv); }
