#include "copseudo/cli.hpp"

int main(int argc, char** argv) { return copseudo::cli::run(argc, argv); }
