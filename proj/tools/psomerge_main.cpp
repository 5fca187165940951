#include "psomerge/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return psomerge::cli::run(args);
}
