#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace shrubmap::cli
{

/// Exit codes: 0 success, 1 usage or configuration error, 2 data error.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2 };

int run(int argc, char ** argv, std::ostream & out, std::ostream & err);
/// Same as run(); args excludes the program name.
int run(const std::vector<std::string> & args, std::ostream & out, std::ostream & err);

}  // namespace shrubmap::cli
