#ifndef COMET_TOOLS_COMMANDS_HPP
#define COMET_TOOLS_COMMANDS_HPP

#include <ostream>
#include <string>
#include <vector>

namespace comet::cli {

/// Runs one command line (without the program name) and returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace comet::cli

#endif
