#include "cli.hpp"

int main(int argc, char** argv) { return ream::cli::run(argc, argv); }
