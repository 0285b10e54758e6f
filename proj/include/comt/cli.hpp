#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace comt {

inline constexpr std::string_view kArtifactVersion = "0.1.0";

/// Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.
/// `args` excludes the program name. A JSON summary goes to `out`; logs and
/// help text go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace comt
