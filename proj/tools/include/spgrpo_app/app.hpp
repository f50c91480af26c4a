#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spgrpo/bias_audit.hpp"
#include "spgrpo/flow_policy.hpp"
#include "spgrpo/grpo.hpp"

namespace spgrpo::app {

enum class Mode { kPretrain, kCalibrate, kTrain, kEval, kAudit };

const char* to_string(Mode mode);
Mode mode_from_string(const std::string& name);

struct PolicySection {
  std::size_t frames = 8;
  std::size_t frame_dim = 2;
  std::size_t num_classes = 8;
  std::size_t embed_dim = 8;
  std::vector<std::size_t> hidden{flow::kDefaultHidden.begin(), flow::kDefaultHidden.end()};
  // Existing policy to start from; empty means "pretrain one first".
  std::string checkpoint;
};

struct DatasetSection {
  std::size_t size = 4096;
  double angular_velocity = 0.2;
  double jitter = 0.01;
};

struct CalibrateSection {
  std::size_t steps = 50;
  std::size_t smoothing_window = 5;
  double fraction = 0.7;
};

struct EvalSection {
  std::size_t samples_per_class = 16;
};

struct AuditSection {
  std::string input;
  std::size_t k = 0;
  std::size_t max_iters = 100;
};

struct RunConfig {
  Mode mode = Mode::kTrain;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  PolicySection policy;
  DatasetSection dataset;
  flow::PretrainOptions pretrain;
  flow::SdeConfig sde;
  cerm::CermConfig cerm;
  // JSON file with a "thresholds" array; replaces cerm.thresholds when set.
  std::string thresholds_file;
  rewards::RewardSuite rewards = rewards::default_suite(8);
  // Only the optimizer/loop fields are read; sde, cerm, suite and seed come
  // from their own sections.
  grpo::TrainConfig train;
  // Write a checkpoint every this many steps; 0 keeps only the final one.
  std::size_t checkpoint_interval = 50;
  CalibrateSection calibrate;
  EvalSection eval;
  AuditSection audit;

  flow::FlowDims dims() const;
  CircleDataset dataset_spec() const;
  // Train config with sde, cerm, suite and seed filled in from the other sections.
  grpo::TrainConfig train_config() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Defaults, overlaid with the JSON document (if any), then with `key=value`
// overrides addressed by dotted paths (array elements by index). Unknown keys
// and type mismatches throw ConfigError with the field path.
RunConfig parse_run_config(std::string_view json_text,
                           const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& overrides = {});

// Fully materialized config, pretty printed.
std::string resolved_config_json(const RunConfig& config);

// Reads the thresholds array written by calibrate.
std::vector<double> read_thresholds_file(const std::filesystem::path& path);

// Fresh random policy from the config seed, pretrained on the toy dataset.
flow::PretrainResult pretrain_policy(const RunConfig& config);

// Loads policy.checkpoint when set, otherwise pretrains (writing the
// pretraining artifacts into the output directory).
flow::FlowPolicy obtain_policy(const RunConfig& config, std::ostream& log);

// Per-stage curves from separate single-term runs of calibrate.steps steps.
struct CalibrationRun {
  std::vector<std::string> term_ids;
  std::vector<std::vector<double>> curves;
  cerm::Calibration calibration;
};
CalibrationRun run_calibration(const flow::FlowPolicy& policy, const RunConfig& config);

// Runs the configured mode, writing artifacts into config.output_dir.
// Returns 0 on success, 1 for configuration errors, 2 for runtime failures
// (after writing failure.json).
int run(const RunConfig& config, std::ostream& log);

// Command-line entry point: `spgrpo MODE [-c FILE] [-o DIR] [--seed N] [--set key=value]...`.
int main_entry(int argc, char** argv, std::ostream& log);

}  // namespace spgrpo::app
