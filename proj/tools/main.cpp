#include "agckan/cli.hpp"

int main(int argc, char** argv) { return agckan::cli::run(argc, argv); }
