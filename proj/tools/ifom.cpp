#include "ifom/cli.hpp"

int main(int argc, char** argv) { return ifom::cli::run(argc, argv); }
