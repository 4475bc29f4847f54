#include "qrc/cli.hpp"

int main(int argc, char** argv) { return qrc::cli::run(argc, argv); }
