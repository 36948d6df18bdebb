#include <iostream>

#include "mvgwhiten/pipeline.hpp"

int main(int argc, char** argv) { return mvgw::run_cli(argc, argv, std::cout, std::cerr); }
