#include "ovrp/cli.hpp"

int main(int argc, char** argv) { return ovrp::run(argc, argv); }
