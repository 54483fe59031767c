// Batch front end for the mixed-method solver: solve | convergence | temporal
// | project | quadcheck. See README.md for the configuration keys and CSV
// schemas.

#include <string>
#include <vector>

#include "hidemix/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty()) {
        std::fprintf(stderr,
                     "usage: hidemix <solve|convergence|temporal|project|quadcheck> "
                     "[--key value]... [--config file]\n");
        return 2;
    }
    return hidemix::cli_main(args);
}
