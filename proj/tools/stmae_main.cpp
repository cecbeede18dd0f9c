#include "stmae/cli.hpp"

int main(int argc, char** argv) { return stmae::run_cli(argc, argv); }
