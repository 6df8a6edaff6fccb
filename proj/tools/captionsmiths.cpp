#include "captionsmiths/cli.hpp"

int main(int argc, char** argv) { return captionsmiths::cli::run(argc, argv); }
