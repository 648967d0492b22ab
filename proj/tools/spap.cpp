#include <iostream>

#include "spap_cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return spap::cli::dispatch(args, std::cout, std::cerr);
}
