#include "commands.hpp"

int main(int argc, char** argv) { return bayeshead::cli::run(argc, argv); }
