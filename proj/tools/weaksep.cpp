#include "weaksep/cli/app.hpp"

int main(int argc, char** argv) { return weaksep::cli::run(argc, argv); }
