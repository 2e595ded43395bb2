#pragma once

#include <map>
#include <string>
#include <vector>

namespace mixlab {

// One fully resolved invocation. params carries every knob of the chosen
// subcommand with defaults already filled in, as the raw strings that were
// given; numeric validation happens at dispatch so this struct stays a
// faithful record of what was asked for, and every report echoes it back.
struct RunConfig {
  std::string subcommand;
  std::map<std::string, std::string> params;
  std::string output_path;  // empty means stdout
  std::string format;       // "csv" or "json"
};

// Builds a RunConfig from argv-style arguments plus an optional file of
// key=value lines ('#' starts a comment). The file named by config_file or
// by a --config=path flag is applied first, then the remaining --key=value
// flags override it. Unknown keys, malformed arguments, a bad format, or a
// missing seed on a subcommand that draws random samples all throw
// std::invalid_argument.
RunConfig parse_config(const std::vector<std::string>& args,
                       const std::string& config_file = "");

// Executes one resolved invocation and writes the report to the configured
// destination. Returns 0 when the run succeeded and any scientific check it
// carries passed, 1 when the run completed but the check failed, 2 on
// operational problems (bad parameter values, unwritable output).
int run(const RunConfig& config);

// parse + run + error reporting on stderr; what main() delegates to.
// Parse failures exit with 2, like other operational errors.
int cli_main(int argc, const char* const* argv);

}  // namespace mixlab
