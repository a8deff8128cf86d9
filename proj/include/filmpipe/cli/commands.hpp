#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "filmpipe/cli/config.hpp"

namespace filmpipe::cli {

enum ExitCode : int { kExitOk = 0, kExitPartial = 1, kExitUsage = 2 };

/// Full command line (without the program name). Errors are reported on err
/// and mapped to exit codes: config and usage problems give 2, I/O and other
/// runtime failures give 1.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int cmd_preprocess(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_train(const ExperimentConfig& config, std::ostream& out, std::ostream& err);
int cmd_evaluate(const ExperimentConfig& config, std::ostream& out, std::ostream& err);

struct ApplyArgs {
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> inputs;  // files or directories
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> noise_seed;
};

int cmd_apply(const ApplyArgs& args, std::ostream& out, std::ostream& err);

/// Train/val/test assignment for an experiment: the explicit splits_file,
/// else <processed_dir>/splits.json, else <run_dir>/splits.json, else a new
/// seeded split saved to <run_dir>/splits.json.
dataset::SplitAssignment resolve_splits(const ExperimentConfig& config,
                                        const std::vector<std::string>& available,
                                        std::ostream& out);

}  // namespace filmpipe::cli
