#include "adagat/harness.hpp"

int main(int argc, char** argv) { return adagat::harness::run_cli(argc, argv); }
