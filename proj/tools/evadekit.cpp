#include "evadekit/cli.hpp"

int main(int argc, char** argv) { return evadekit::run_cli(argc, argv); }
