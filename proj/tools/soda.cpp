#include "soda/service/cli.hpp"

int main(int argc, char** argv) { return soda::service::cli_main(argc, argv); }
