#include "qdn/cli.hpp"

int main(int argc, char** argv) { return qdn::cli_dispatch(argc, argv); }
