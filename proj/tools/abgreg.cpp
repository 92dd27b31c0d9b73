#include "abgreg/cli.hpp"

int main(int argc, char** argv) { return abgreg::cli::run(argc, argv); }
