#include "wordlens/commands.hpp"

int main(int argc, char** argv) { return wordlens::cli::run(argc, argv); }
