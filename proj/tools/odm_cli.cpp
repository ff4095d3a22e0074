#include "odm/cli.hpp"

int main(int argc, char** argv) { return odm::cli_main(argc, argv); }
