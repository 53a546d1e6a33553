#include "mdlm/cli.hpp"

int main(int argc, char ** argv) {
    return mdlm::cli::dispatch(argc, argv);
}
