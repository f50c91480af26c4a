#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "spgrpo/cerm.hpp"
#include "spgrpo/flow_policy.hpp"
#include "spgrpo/numerics.hpp"
#include "spgrpo/rewards.hpp"

namespace spgrpo::grpo {

using flow::FlowPolicy;
using flow::Trajectory;
using numerics::MlpParams;
using numerics::RandomSource;
using numerics::smooth_curve;

// Importance-ratio clip range used for large video models.
inline constexpr double kLargeModelClipEps = 1e-4;

struct TrainConfig {
  std::size_t group_size = 16;
  double clip_eps = 0.1;
  double learning_rate = 3e-4;
  std::size_t num_steps = 200;
  double timestep_fraction = 0.6;
  double ratio_clamp_max = 5.0;
  std::size_t ref_refresh_interval = 1;
  // Every member of a group starts from the same initial noise, so reward
  // differences inside the group come only from the SDE steps being scored.
  bool shared_initial_noise = true;
  std::uint64_t seed = 0;
  flow::SdeConfig sde;
  cerm::CermConfig cerm;
  rewards::RewardSuite suite = rewards::default_suite(8);

  // Throws ConfigError naming the offending field.
  void validate(const flow::FlowDims& dims) const;
  // ceil(timestep_fraction * sde.num_steps).
  std::size_t selected_steps() const;
};

// exp(new - old) clamped to [1 / clamp_max, clamp_max].
double importance_ratio(double new_log_prob, double old_log_prob, double clamp_max);

struct Surrogate {
  double objective = 0.0;
  // clipped[i][t] is set where the clipped branch is strictly the minimum.
  std::vector<std::vector<bool>> clipped;
  double clip_fraction = 0.0;
};

// (1/G) sum_i (1/T') sum_t min(rho A_i, clip(rho, 1 - eps, 1 + eps) A_i),
// with ratios laid out G x T'.
Surrogate surrogate_objective(const std::vector<std::vector<double>>& ratios,
                              std::span<const double> advantages, double clip_eps);

struct SurrogateGradient {
  Surrogate surrogate;
  std::vector<std::vector<double>> ratios;
  // dJ/dparams. Advantages, noise, states and the step subset are constants.
  MlpParams gradient;
};

// Evaluates the clipped objective of `policy` on trajectories recorded by the
// reference policy (their stored log-probs are the denominators) and
// backpropagates it through the transition means.
SurrogateGradient surrogate_gradient(const FlowPolicy& policy,
                                     std::span<const Trajectory> trajectories,
                                     std::span<const double> advantages,
                                     std::span<const std::size_t> steps, double clip_eps,
                                     double ratio_clamp_max);

struct StepRecord {
  std::size_t step = 0;
  std::size_t condition = 0;
  cerm::CermState cerm;
  double mixed_mean = 0.0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
  std::vector<std::size_t> selected_steps;
};

using TrainLog = std::vector<StepRecord>;

// Distinct sorted SDE step indices, count = config.selected_steps().
std::vector<std::size_t> sample_step_subset(std::size_t num_steps, std::size_t count,
                                            RandomSource& rng);

// Owns the policy, the frozen reference snapshot and the optimizer state.
class Trainer {
 public:
  Trainer(FlowPolicy policy, TrainConfig config);

  // One group rollout under the reference policy, co-evolving reward,
  // clipped-surrogate gradient and optimizer update. Refreshes the reference
  // first when the step index is a multiple of ref_refresh_interval.
  StepRecord step();

  const FlowPolicy& policy() const { return policy_; }
  const FlowPolicy& reference() const { return reference_; }
  const TrainConfig& config() const { return config_; }
  const TrainLog& log() const { return log_; }
  std::size_t steps_done() const { return log_.size(); }

 private:
  TrainConfig config_;
  FlowPolicy policy_;
  FlowPolicy reference_;
  numerics::AdamState adam_;
  RandomSource rng_;
  TrainLog log_;
  cerm::CermState last_cerm_;
  bool has_prior_ = false;
};

struct TrainResult {
  FlowPolicy policy;
  TrainLog log;
};

using StepCallback = std::function<void(const Trainer&, const StepRecord&)>;

TrainResult train(FlowPolicy policy, const TrainConfig& config,
                  const StepCallback& on_step = {});

// Per-term reward statistics over fresh SDE groups (decoded samples).
struct EvalStats {
  std::vector<std::string> term_ids;
  std::size_t num_samples = 0;
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<double> min;
  std::vector<double> max;
  // per_class_mean[c][j]
  std::vector<std::vector<double>> per_class_mean;
  std::size_t flagged = 0;
};

EvalStats evaluate_policy(const FlowPolicy& policy, const rewards::RewardSuite& suite,
                          const flow::SdeConfig& sde, std::size_t samples_per_class,
                          std::uint64_t seed);

// Line-delimited JSON, one record per step.
void write_log_jsonl(std::ostream& out, const TrainLog& log);
// CSV with one row per step; per-term columns use the suite ids.
void write_log_csv(std::ostream& out, const TrainLog& log, const rewards::RewardSuite& suite);

std::vector<double> mixed_reward_curve(const TrainLog& log);
std::vector<double> term_mean_curve(const TrainLog& log, std::size_t term);

}  // namespace spgrpo::grpo
