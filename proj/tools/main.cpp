#include "stylemill/cli.hpp"

int main(int argc, char** argv) { return sm::cli::run(argc, argv); }
