#include "hocslm/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return hocslm::cli::dispatch(args);
}
