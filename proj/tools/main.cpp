#include "gccpm/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return gccpm::run_cli(argc, argv, std::cout, std::cerr);
}
