#include "rnnfc/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return rnnfc::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cerr);
}
