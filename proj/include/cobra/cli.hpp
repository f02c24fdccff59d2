#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cobra/sim.hpp"

namespace cobra::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Flat `key = value` file. '#' starts a comment. Duplicate keys: last wins.
std::map<std::string, std::string> parse_config(std::istream& is);

/// Parses "AxB" into (A, B). Throws std::invalid_argument.
std::pair<std::size_t, std::size_t> parse_grid_spec(const std::string& spec);

/// Runs the command line (args excludes the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cobra::cli
