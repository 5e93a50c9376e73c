#include "csrnet/cli.hpp"

int main(int argc, char** argv) {
    return csrnet::cli_main(argc, argv);
}
