#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spgrpo/rewards.hpp"

namespace spgrpo::cerm {

using rewards::RewardMatrix;

// Weight persistence across groups. kPerGroup recomputes the stage weights
// from each group alone; kEma blends them with the previous group's weights.
enum class WeightMode { kPerGroup, kEma };

const char* to_string(WeightMode mode);
WeightMode weight_mode_from_string(const std::string& name);

struct CermConfig {
  double alpha = 8.0;   // softmax sharpness
  double beta = 1.0;    // sparsity modulation
  std::vector<double> thresholds{0.75, 0.75, 0.75};
  WeightMode weight_mode = WeightMode::kPerGroup;
  double ema_decay = 0.9;

  void validate(std::size_t num_terms) const;
};

// Everything one co-evolving-reward evaluation produces for a group.
struct CermState {
  std::vector<double> group_means;  // per term
  std::vector<double> sparsities;   // Hoyer index per term
  std::vector<double> transitions;  // gate value per term
  std::vector<double> weights;      // stage mixture, sums to 1
  std::vector<double> mixed;        // per sample
  std::vector<double> advantages;   // per sample, zero mean / unit std
};

inline constexpr double kAdvantageStdFloor = 1e-8;

// (sqrt(G) - |r|_1 / |r|_2) / (sqrt(G) - 1). An all-zero vector gives 0;
// negative entries throw DomainError.
double hoyer(std::span<const double> r);

std::vector<double> group_means(const RewardMatrix& matrix);

// g_j = sigmoid(mean_j - tau_j) + beta * (S_{j-1} - S_j) with S_0 = 0.
// `stage` is 1-based.
double transition(std::size_t stage, std::span<const double> means,
                  std::span<const double> sparsities, const CermConfig& config);

// softmax(alpha * g), max-subtracted.
std::vector<double> stage_weights(std::span<const double> transitions, double alpha);

// r_i = sum_j w_j r_ij. Throws DomainError unless the weights lie on the
// simplex (within 1e-9).
std::vector<double> mixed_reward(const RewardMatrix& matrix, std::span<const double> weights);

// (r - mean) / (population std + 1e-8).
std::vector<double> normalize_advantages(std::span<const double> mixed);

// Chains the operations above. In EMA mode the weights are blended with
// prior->weights (when given) and renormalized before mixing.
CermState cerm_step(const RewardMatrix& matrix, const CermConfig& config,
                    const CermState* prior = nullptr);

struct Calibration {
  std::vector<double> thresholds;
  std::vector<std::string> warnings;
};

// tau_j = start + 0.7 * (end - start) of each smoothed reward curve; a curve
// that does not improve yields tau_j = start with a warning.
Calibration calibrate_thresholds(const std::vector<std::vector<double>>& curves,
                                 std::size_t smoothing_window = 1,
                                 double fraction = 0.7);

// Structured per-step record: one JSON object on one line.
std::string state_record(const CermState& state);

}  // namespace spgrpo::cerm
