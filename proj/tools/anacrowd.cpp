#include "anacrowd/cli.hpp"

int main(int argc, char** argv) { return anacrowd::cli::dispatch(argc, argv); }
