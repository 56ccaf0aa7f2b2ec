#include "migproj/cli.hpp"

int main(int argc, char** argv) { return migproj::cli::dispatch(argc, argv); }
