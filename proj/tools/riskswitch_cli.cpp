#include "riskswitch/cli_app.hpp"

int main(int argc, char** argv) { return riskswitch::cli_main(argc, argv); }
