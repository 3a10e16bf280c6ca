#include "pdvmrnn/commands.hpp"

int main(int argc, char** argv) { return pdvmrnn::run_cli(argc, argv); }
