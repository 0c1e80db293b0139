#include "commands.hpp"

int main(int argc, char** argv) { return traverse::cli::run(argc, argv); }
