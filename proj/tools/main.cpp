#include "cli.hpp"

int main(int argc, char** argv) { return bgwsr::cli::dispatch(argc, argv); }
