#pragma once

#include <string>

namespace gsedit::cli {

std::string version();

/// Parses argv and runs one subcommand. Returns 0 on success, 2 on a usage
/// error and 1 on a runtime error; errors go to stderr as
/// "ERROR <stage>: <message>".
int run(int argc, const char* const* argv);

} // namespace gsedit::cli
