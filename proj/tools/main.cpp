#include "panelsvd/harness.hpp"

int main(int argc, char** argv) { return panelsvd::cli_main(argc, argv); }
