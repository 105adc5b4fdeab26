#include <string>
#include <vector>

#include "airgap/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return airgap::run_cli(args);
}
