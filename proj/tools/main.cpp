#include "sscae/cli.hpp"

int main(int argc, char** argv) { return sscae::cli::run(argc, argv); }
