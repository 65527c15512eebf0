#include <string>
#include <vector>

#include "babelkit/runner.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return babel::run_cli(args);
}
