#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spgrpo/toy_data.hpp"

namespace spgrpo::rewards {

enum class TermKind { kFidelity, kSmoothness, kAlignment, kCustom };

const char* to_string(TermKind kind);
// Throws ConfigError for an unknown name.
TermKind term_kind_from_string(const std::string& name);

// One staged reward term, mapping a sample into [0, 1]:
//   fidelity    exp(-mean_t (|f_t| - 1)^2 / scale)
//   smoothness  exp(-mean_t |f_{t+1} - 2 f_t + f_{t-1}|^2 / scale)
//   alignment   exp(-angle_error(f_T, target(class))^2 / scale)
struct RewardTerm {
  std::string id;
  std::size_t stage = 1;
  TermKind kind = TermKind::kFidelity;
  double scale = 1.0;
  // Used only by kCustom; must return a value in [0, 1].
  std::function<double(const ToySample&)> custom;
};

// Ordered terms plus the class geometry the alignment term needs.
struct RewardSuite {
  std::vector<RewardTerm> terms;
  std::size_t num_classes = 8;

  std::size_t size() const { return terms.size(); }
  // Stages must be 1..K in order, scales positive and finite.
  void validate() const;
};

// Fidelity 0.01, smoothness 0.03, alignment 0.005; stages 1, 2, 3.
RewardSuite default_suite(std::size_t num_classes);

struct TermValue {
  double value = 0.0;
  // Set when the term could not be evaluated (e.g. a frame at the origin for
  // alignment); value is then 0.
  bool flagged = false;
};

TermValue eval_reward_term(const RewardTerm& term, const ToySample& sample,
                           std::size_t num_classes);

// G x K rewards for one group, row i = sample i, column j = term j.
struct RewardMatrix {
  std::size_t group_size = 0;
  std::size_t num_terms = 0;
  std::vector<double> values;
  std::vector<bool> flags;

  double operator()(std::size_t i, std::size_t j) const { return values[i * num_terms + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * num_terms + j]; }
  std::vector<double> column(std::size_t j) const;
  bool flagged(std::size_t i, std::size_t j) const { return flags[i * num_terms + j]; }

  static RewardMatrix from_rows(const std::vector<std::vector<double>>& rows);
  // Throws when values leave [0, 1] or are non-finite.
  void validate() const;
};

RewardMatrix eval_group(const RewardSuite& suite, std::span<const ToySample> samples);

// Radial, second-difference and angular residuals behind the three built-in
// terms; exposed so tests can check monotonicity directly.
double mean_radial_residual_sq(const ToySample& sample);
double mean_second_difference_sq(const ToySample& sample);
// Wrapped to [0, pi]. Returns a negative value when the final frame is at
// the origin.
double final_angle_error(const ToySample& sample, std::size_t num_classes);

}  // namespace spgrpo::rewards
