#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace ltp::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode { kOk = 0, kUsage = 2, kRuntime = 3 };

// Fully resolved command: what a RunManifest stores and replay re-executes.
struct Invocation {
  std::string command;
  std::map<std::string, std::string> options;  // long option name -> value
  nlohmann::json config;                       // resolved profile tree
  int threads = 1;
  std::filesystem::path out;
};

nlohmann::json invocation_to_json(const Invocation& inv);
Invocation invocation_from_json(const nlohmann::json& j);

// Executes a resolved invocation; throws ltp::Error subclasses on failure.
void execute(const Invocation& inv);

// argv entry point with exit-code mapping; messages go to stderr.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

// "a.b.c" -> "/a/b/c"; the value is parsed as JSON when possible, else kept
// as a string.
void apply_override(nlohmann::json& tree, const std::string& assignment);

}  // namespace ltp::cli
