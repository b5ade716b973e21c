#include "detext/cli.hpp"

int main(int argc, char** argv) { return detext::cli::run(argc, argv); }
