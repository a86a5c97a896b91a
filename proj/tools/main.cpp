#include "vns/cli.hpp"

int main(int argc, char** argv) { return vns::cli::run(argc, argv); }
