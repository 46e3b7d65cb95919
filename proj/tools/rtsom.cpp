#include "rtsom/cli.hpp"

int main(int argc, char** argv) { return rtsom::cli::run(argc, argv); }
