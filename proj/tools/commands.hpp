#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace oskf::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kBadInput = 2 };

struct SelfcheckArgs {
  std::optional<std::string> checkpoint;
  std::uint64_t seed = 7;
};

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string models;
  std::optional<std::string> report;
};

struct FpsArgs {
  std::string ply;
  std::size_t k = 64;
  std::string out;
  std::optional<std::size_t> seed_index;
};

struct DemoArgs {
  std::uint64_t seed = 1;
  int steps = 1500;
  int scenes = 200;
  int holdout = 100;
  double lr = 0.02;
  std::size_t batch = 8;
  double momentum = 0.9;
  double clip = 1.0;
  std::string out = "demo.ckpt";
  std::optional<std::string> table;
};

struct SceneArgs {
  std::uint64_t seed = 1;
  std::string out;
  int crop_size = 128;
  int levels = 4;
  int channels = 16;
};

// Each command writes human-readable output to `out` and returns an exit
// code. Library InputErrors propagate; main() maps them to kBadInput.
int cmd_selfcheck(const SelfcheckArgs& args, std::ostream& out);
int cmd_eval(const EvalArgs& args, std::ostream& out);
int cmd_fps(const FpsArgs& args, std::ostream& out);
int cmd_demo(const DemoArgs& args, int threads, std::ostream& out);
int cmd_scene(const SceneArgs& args, std::ostream& out);

/// Appends flags from a flat JSON config file to `args` for every key not
/// already given on the command line. Throws InputError on nested values.
std::vector<std::string> apply_config_file(std::vector<std::string> args);

/// Full entry point: parses argv, dispatches, maps errors to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace oskf::cli
