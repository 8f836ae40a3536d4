#include "vit4lpa/cli.hpp"

int main(int argc, char** argv) {
    return vit4lpa::cli::run(argc, argv);
}
