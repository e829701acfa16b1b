#include "igs/cli.hpp"

int main(int argc, char** argv) { return igs::run_command(argc, argv); }
