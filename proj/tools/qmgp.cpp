#include "qmgp/cli.hpp"

int main(int argc, char** argv) { return qmgp::cli::run(argc, argv); }
