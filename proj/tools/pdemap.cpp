#include <iostream>

#include "pdemap/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return pdemap::cli::run(args, std::cout, std::cerr);
}
