#pragma once

#include <string>
#include <vector>

namespace densecorr {

/// Exit codes: 0 when every output was written, 1 on runtime failure
/// (failing ids are listed on stderr), 2 on usage errors.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace densecorr
