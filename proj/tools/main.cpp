#include "abevo/cli.hpp"

int main(int argc, char** argv) { return abevo::cli::dispatch(argc, argv); }
