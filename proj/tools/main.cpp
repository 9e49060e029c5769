#include "cli.hpp"

int main(int argc, char** argv)
{
    return epiopt::cli::run_cli(argc, argv);
}
