#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace layoutnet {

/// Exit status: 0 success, 1 usage error, 2 runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// `key = value` lines with `#` comments, turned into `--key=value` arguments.
std::vector<std::string> read_config_args(const std::string& path);

}  // namespace layoutnet
