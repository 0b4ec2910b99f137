#include "renewal_lab/cli.hpp"

int main(int argc, char** argv) { return renewal_lab::run(argc, argv); }
