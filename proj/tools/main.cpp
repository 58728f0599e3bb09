#include "ecp/cli.hpp"

int main(int argc, char** argv) { return ecp::cli::run(argc, argv); }
