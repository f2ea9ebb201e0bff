#include "cli.hpp"

int main(int argc, char** argv) { return optenc::run_cli(argc, argv); }
