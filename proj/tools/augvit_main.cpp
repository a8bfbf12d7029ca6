#include "augvit/cli.hpp"

int main(int argc, char** argv) {
    return augvit::run_cli(argc, argv);
}
