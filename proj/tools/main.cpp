#include "facechannel/cli.hpp"

int main(int argc, char** argv) { return facechannel::cli::run(argc, argv); }
