#include "dilute_rls/cli.hpp"

int main(int argc, char** argv) {
    return dilute_rls::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
