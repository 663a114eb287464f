#include <iostream>
#include <string>
#include <vector>

#include "dslasso/cli.hpp"

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return dslasso::cli::run(args, std::cout, std::cerr);
}
