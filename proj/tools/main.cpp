#include "nsopt/cli.hpp"

int main(int argc, char** argv) { return nsopt::cli::run(argc, argv); }
