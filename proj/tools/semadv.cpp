#include "semadv/evalcli/cli.hpp"

int main(int argc, char** argv) { return semadv::evalcli::run_cli(argc, argv); }
