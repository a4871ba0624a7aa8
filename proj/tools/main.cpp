#include "commands.hpp"

int main(int argc, char** argv) { return fbsp::cli::run(argc, argv); }
