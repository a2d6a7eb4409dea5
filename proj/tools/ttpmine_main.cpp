#include "ttpmine/pipeline.hpp"

int main(int argc, char** argv) {
    return ttpmine::run_cli(argc, argv);
}
