#include "mot3d/cli.hpp"

int main(int argc, char** argv) { return mot3d::cli::run(argc, argv); }
