#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stmae/training.hpp"

namespace stmae {

/// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitRuntimeError = 2;

/// Reads a JSON config (an empty path or empty file gives the defaults) and
/// applies "key=value" overrides in order.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Parses "a,b,c" into seeds.
std::vector<std::uint64_t> parse_seeds(const std::string& list);

/// Command-line entry point: generate, pretrain, finetune, train, evaluate,
/// ablate, sweep, gradcheck.
int run_cli(int argc, char** argv);

}  // namespace stmae
