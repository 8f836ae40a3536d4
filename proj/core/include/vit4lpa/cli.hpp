#pragma once

#include <string>
#include <vector>

namespace vit4lpa::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point behind the vit4lpa binary. Commands: gen-data, pretrain,
/// finetune, evaluate, analyze, grad-check. Returns the process exit code:
/// 0 success, 1 validation error (bad flags, unknown keys, missing inputs),
/// 2 runtime failure.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace vit4lpa::cli
