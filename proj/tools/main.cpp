#include "rodial/cli.hpp"

int main(int argc, char** argv) { return rodial::cli::run(argc, argv); }
