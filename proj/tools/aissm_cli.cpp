#include <iostream>

#include "aissm/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return aissm::run_cli(args, std::cout, std::cerr);
}
