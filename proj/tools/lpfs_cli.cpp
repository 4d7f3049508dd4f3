#include "cli_app.hpp"

int main(int argc, char** argv) { return lpfs::cli::run(argc, argv); }
