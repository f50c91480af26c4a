#include "spgrpo/rewards.hpp"

#include <cmath>
#include <numbers>

#include "spgrpo/errors.hpp"

namespace spgrpo::rewards {

const char* to_string(TermKind kind) {
  switch (kind) {
    case TermKind::kFidelity: return "fidelity";
    case TermKind::kSmoothness: return "smoothness";
    case TermKind::kAlignment: return "alignment";
    case TermKind::kCustom: return "custom";
  }
  return "unknown";
}

TermKind term_kind_from_string(const std::string& name) {
  if (name == "fidelity") return TermKind::kFidelity;
  if (name == "smoothness") return TermKind::kSmoothness;
  if (name == "alignment") return TermKind::kAlignment;
  if (name == "custom") return TermKind::kCustom;
  throw ConfigError("unknown reward term kind '" + name + "'");
}

void RewardSuite::validate() const {
  if (terms.empty()) throw ConfigError("reward suite: need at least one term");
  for (std::size_t j = 0; j < terms.size(); ++j) {
    const auto& term = terms[j];
    if (term.stage != j + 1) {
      throw ConfigError("reward suite: term '" + term.id + "' has stage " +
                        std::to_string(term.stage) + ", expected " + std::to_string(j + 1));
    }
    if (!(term.scale > 0.0) || !std::isfinite(term.scale)) {
      throw ConfigError("reward suite: term '" + term.id + "' needs a positive scale");
    }
    if (term.kind == TermKind::kCustom && !term.custom) {
      throw ConfigError("reward suite: custom term '" + term.id + "' has no evaluator");
    }
  }
}

RewardSuite default_suite(std::size_t num_classes) {
  RewardSuite suite;
  suite.num_classes = num_classes;
  suite.terms = {
      {"fidelity", 1, TermKind::kFidelity, 0.01, {}},
      {"smoothness", 2, TermKind::kSmoothness, 0.03, {}},
      {"alignment", 3, TermKind::kAlignment, 0.005, {}},
  };
  return suite;
}

double mean_radial_residual_sq(const ToySample& s) {
  double acc = 0.0;
  for (std::size_t t = 0; t < s.frames; ++t) {
    double sq = 0.0;
    for (double v : s.frame(t)) sq += v * v;
    const double r = std::sqrt(sq) - 1.0;
    acc += r * r;
  }
  return acc / static_cast<double>(s.frames);
}

double mean_second_difference_sq(const ToySample& s) {
  // No interior frames means no curvature to penalize.
  if (s.frames < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t t = 1; t + 1 < s.frames; ++t) {
    const auto prev = s.frame(t - 1);
    const auto cur = s.frame(t);
    const auto next = s.frame(t + 1);
    for (std::size_t d = 0; d < s.frame_dim; ++d) {
      const double dd = next[d] - 2.0 * cur[d] + prev[d];
      acc += dd * dd;
    }
  }
  return acc / static_cast<double>(s.frames - 2);
}

double final_angle_error(const ToySample& s, std::size_t num_classes) {
  if (s.frame_dim != 2) throw ShapeError("alignment reward needs two-dimensional frames");
  const auto last = s.frame(s.frames - 1);
  if (last[0] == 0.0 && last[1] == 0.0) return -1.0;
  const double angle = std::atan2(last[1], last[0]);
  double diff = std::remainder(angle - target_angle(s.condition, num_classes),
                               2.0 * std::numbers::pi);
  return std::abs(diff);
}

TermValue eval_reward_term(const RewardTerm& term, const ToySample& sample,
                           std::size_t num_classes) {
  if (sample.values.size() != sample.frames * sample.frame_dim || sample.frames < 2) {
    throw ShapeError("eval_reward_term: malformed sample");
  }
  double residual = 0.0;
  switch (term.kind) {
    case TermKind::kFidelity:
      residual = mean_radial_residual_sq(sample);
      break;
    case TermKind::kSmoothness:
      residual = mean_second_difference_sq(sample);
      break;
    case TermKind::kAlignment: {
      const double err = final_angle_error(sample, num_classes);
      if (err < 0.0) return {0.0, true};
      residual = err * err;
      break;
    }
    case TermKind::kCustom: {
      const double v = term.custom(sample);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) return {0.0, true};
      return {v, false};
    }
  }
  const double value = std::exp(-residual / term.scale);
  if (!std::isfinite(value)) return {0.0, true};
  return {value, false};
}

std::vector<double> RewardMatrix::column(std::size_t j) const {
  std::vector<double> col(group_size);
  for (std::size_t i = 0; i < group_size; ++i) col[i] = (*this)(i, j);
  return col;
}

RewardMatrix RewardMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  RewardMatrix m;
  m.group_size = rows.size();
  m.num_terms = rows.empty() ? 0 : rows.front().size();
  for (const auto& row : rows) {
    if (row.size() != m.num_terms) throw ShapeError("RewardMatrix: ragged rows");
    m.values.insert(m.values.end(), row.begin(), row.end());
  }
  m.flags.assign(m.values.size(), false);
  m.validate();
  return m;
}

void RewardMatrix::validate() const {
  if (values.size() != group_size * num_terms || flags.size() != values.size()) {
    throw ShapeError("RewardMatrix: storage does not match G x K");
  }
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw DomainError("RewardMatrix: reward outside [0, 1]");
    }
  }
}

RewardMatrix eval_group(const RewardSuite& suite, std::span<const ToySample> samples) {
  suite.validate();
  if (samples.size() < 2) throw DomainError("eval_group: group size must be >= 2");
  RewardMatrix m;
  m.group_size = samples.size();
  m.num_terms = suite.size();
  m.values.resize(m.group_size * m.num_terms);
  m.flags.resize(m.values.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = 0; j < suite.size(); ++j) {
      TermValue tv;
      try {
        tv = eval_reward_term(suite.terms[j], samples[i], suite.num_classes);
      } catch (const Error&) {
        tv = {0.0, true};
      }
      m.values[i * m.num_terms + j] = tv.value;
      m.flags[i * m.num_terms + j] = tv.flagged;
    }
  }
  return m;
}

}  // namespace spgrpo::rewards
