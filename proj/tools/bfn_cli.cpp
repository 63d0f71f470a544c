#include "bfn/cli/app.hpp"

int main(int argc, char** argv) { return bfn::cli::run(argc, argv); }
