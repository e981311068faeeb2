#include "sonos/cli.hpp"

int main(int argc, char** argv) { return sonos::cli::run(argc, argv); }
