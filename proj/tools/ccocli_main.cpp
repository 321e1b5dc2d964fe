#include "cco/cli.hpp"

int main(int argc, char** argv) { return cco::cli::run(argc, argv); }
