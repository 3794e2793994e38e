#include "guidelearn/cli.hpp"

int main(int argc, char** argv) { return guidelearn::run_cli(argc, argv); }
