#include "antispoof/harness/cli.hpp"

int main(int argc, char** argv) { return antispoof::harness::cli_main(argc, argv); }
