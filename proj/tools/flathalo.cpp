#include "flathalo/cli.hpp"

int main(int argc, char** argv) { return flathalo::cli::run(argc, argv); }
