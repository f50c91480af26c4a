#include "spgrpo/cerm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "spgrpo/errors.hpp"
#include "spgrpo/numerics.hpp"

namespace spgrpo::cerm {

const char* to_string(WeightMode mode) {
  return mode == WeightMode::kEma ? "ema" : "per_group";
}

WeightMode weight_mode_from_string(const std::string& name) {
  if (name == "per_group") return WeightMode::kPerGroup;
  if (name == "ema") return WeightMode::kEma;
  throw ConfigError("unknown cerm weight mode '" + name + "'");
}

void CermConfig::validate(std::size_t num_terms) const {
  if (num_terms < 1) throw ConfigError("cerm: need at least one reward term");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("cerm.alpha must be >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("cerm.beta must be >= 0");
  if (thresholds.size() != num_terms) {
    throw ConfigError("cerm.thresholds has " + std::to_string(thresholds.size()) +
                      " entries for " + std::to_string(num_terms) + " reward terms");
  }
  for (double t : thresholds) {
    if (!std::isfinite(t)) throw ConfigError("cerm.thresholds must be finite");
  }
  if (weight_mode == WeightMode::kEma && !(ema_decay > 0.0 && ema_decay < 1.0)) {
    throw ConfigError("cerm.ema_decay must lie in (0, 1)");
  }
}

double hoyer(std::span<const double> r) {
  if (r.size() < 2) throw DomainError("hoyer: need at least two entries");
  double l1 = 0.0, l2sq = 0.0;
  for (double v : r) {
    if (v < 0.0) throw DomainError("hoyer: negative entry");
    if (!std::isfinite(v)) throw NonFiniteError("hoyer: non-finite entry");
    l1 += v;
    l2sq += v * v;
  }
  if (l2sq == 0.0) return 0.0;
  const double root_g = std::sqrt(static_cast<double>(r.size()));
  const double s = (root_g - l1 / std::sqrt(l2sq)) / (root_g - 1.0);
  return std::clamp(s, 0.0, 1.0);
}

std::vector<double> group_means(const RewardMatrix& matrix) {
  if (matrix.group_size < 2) throw DomainError("group_means: group size must be >= 2");
  std::vector<double> means(matrix.num_terms, 0.0);
  for (std::size_t i = 0; i < matrix.group_size; ++i) {
    for (std::size_t j = 0; j < matrix.num_terms; ++j) means[j] += matrix(i, j);
  }
  for (double& m : means) m /= static_cast<double>(matrix.group_size);
  return means;
}

double transition(std::size_t stage, std::span<const double> means,
                  std::span<const double> sparsities, const CermConfig& config) {
  if (stage < 1 || stage > means.size() || sparsities.size() != means.size() ||
      config.thresholds.size() != means.size()) {
    throw DomainError("transition: stage index or statistic lengths invalid");
  }
  const std::size_t j = stage - 1;
  const double gap = means[j] - config.thresholds[j];
  const double competence = 1.0 / (1.0 + std::exp(-gap));
  const double previous = j == 0 ? 0.0 : sparsities[j - 1];
  return competence + config.beta * (previous - sparsities[j]);
}

std::vector<double> stage_weights(std::span<const double> transitions, double alpha) {
  if (transitions.empty()) throw DomainError("stage_weights: no stages");
  const double top = *std::max_element(transitions.begin(), transitions.end());
  std::vector<double> w(transitions.size());
  double total = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    w[j] = std::exp(alpha * (transitions[j] - top));
    total += w[j];
  }
  for (double& v : w) v /= total;
  return w;
}

std::vector<double> mixed_reward(const RewardMatrix& matrix, std::span<const double> weights) {
  if (weights.size() != matrix.num_terms) throw ShapeError("mixed_reward: weight count mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw DomainError("mixed_reward: weight outside [0, 1]");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("mixed_reward: weights do not sum to 1");
  std::vector<double> mixed(matrix.group_size, 0.0);
  for (std::size_t i = 0; i < matrix.group_size; ++i) {
    for (std::size_t j = 0; j < matrix.num_terms; ++j) mixed[i] += weights[j] * matrix(i, j);
  }
  return mixed;
}

std::vector<double> normalize_advantages(std::span<const double> mixed) {
  if (mixed.size() < 2) throw DomainError("normalize_advantages: group size must be >= 2");
  const double n = static_cast<double>(mixed.size());
  const double mean = std::accumulate(mixed.begin(), mixed.end(), 0.0) / n;
  double var = 0.0;
  for (double r : mixed) var += (r - mean) * (r - mean);
  const double denom = std::sqrt(var / n) + kAdvantageStdFloor;
  std::vector<double> adv(mixed.size());
  for (std::size_t i = 0; i < adv.size(); ++i) adv[i] = (mixed[i] - mean) / denom;
  return adv;
}

CermState cerm_step(const RewardMatrix& matrix, const CermConfig& config,
                    const CermState* prior) {
  matrix.validate();
  config.validate(matrix.num_terms);
  CermState s;
  s.group_means = group_means(matrix);
  s.sparsities.resize(matrix.num_terms);
  for (std::size_t j = 0; j < matrix.num_terms; ++j) s.sparsities[j] = hoyer(matrix.column(j));
  s.transitions.resize(matrix.num_terms);
  for (std::size_t j = 0; j < matrix.num_terms; ++j) {
    s.transitions[j] = transition(j + 1, s.group_means, s.sparsities, config);
  }
  s.weights = stage_weights(s.transitions, config.alpha);
  if (config.weight_mode == WeightMode::kEma && prior != nullptr &&
      prior->weights.size() == s.weights.size()) {
    double total = 0.0;
    for (std::size_t j = 0; j < s.weights.size(); ++j) {
      s.weights[j] = config.ema_decay * prior->weights[j] + (1.0 - config.ema_decay) * s.weights[j];
      total += s.weights[j];
    }
    for (double& w : s.weights) w /= total;
  }
  s.mixed = mixed_reward(matrix, s.weights);
  s.advantages = normalize_advantages(s.mixed);
  return s;
}

Calibration calibrate_thresholds(const std::vector<std::vector<double>>& curves,
                                 std::size_t smoothing_window, double fraction) {
  Calibration out;
  for (std::size_t j = 0; j < curves.size(); ++j) {
    if (curves[j].empty()) throw DomainError("calibrate_thresholds: empty curve");
    const auto smooth = numerics::smooth_curve(curves[j], smoothing_window);
    const double start = smooth.front();
    const double end = smooth.back();
    if (end <= start) {
      out.thresholds.push_back(start);
      out.warnings.push_back("stage " + std::to_string(j + 1) +
                             ": reward did not improve; threshold set to start value");
    } else {
      out.thresholds.push_back(start + fraction * (end - start));
    }
  }
  return out;
}

std::string state_record(const CermState& state) {
  nlohmann::json j;
  j["group_means"] = state.group_means;
  j["sparsities"] = state.sparsities;
  j["transitions"] = state.transitions;
  j["weights"] = state.weights;
  j["mixed"] = state.mixed;
  j["advantages"] = state.advantages;
  return j.dump();
}

}  // namespace spgrpo::cerm
