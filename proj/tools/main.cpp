#include "cli.hpp"

int main(int argc, char** argv) { return mcdet::cli::run(argc, argv); }
