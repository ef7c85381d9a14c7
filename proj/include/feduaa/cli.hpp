#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace feduaa {

// Exit codes: 0 success, 1 check failure, 2 config/usage, 3 I/O, 4 numeric.
// `args` excludes the program name. Everything the commands print goes
// through `out`/`err`, so tests can drive the CLI in-process.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace feduaa
