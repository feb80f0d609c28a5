#pragma once

#include <iosfwd>
#include <map>
#include <string>

namespace hmqm::cli {

enum ExitCode : int {
  kOk = 0,
  kInvalidParameters = 2,
  kInfeasiblePlan = 3,
  kIoFailure = 4,
};

/// Flat key=value text; '#' starts a comment. Throws InvalidArgument on a
/// line without '=' and IoError when the file cannot be read.
std::map<std::string, std::string> parse_config(std::istream& in);
std::map<std::string, std::string> read_config(const std::string& path);

/// Entry point of the hmqm tool. Results go to `out` unless --out is given.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hmqm::cli
