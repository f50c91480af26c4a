#include "spgrpo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "spgrpo/errors.hpp"

namespace spgrpo::grpo {

void TrainConfig::validate(const flow::FlowDims& dims) const {
  if (group_size < 2) throw ConfigError("train.group_size must be >= 2");
  if (!(clip_eps > 0.0)) throw ConfigError("train.clip_eps must be > 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate must be >= 0");
  }
  if (!(timestep_fraction > 0.0 && timestep_fraction <= 1.0)) {
    throw ConfigError("train.timestep_fraction must lie in (0, 1]");
  }
  if (!(ratio_clamp_max > 1.0)) throw ConfigError("train.ratio_clamp_max must be > 1");
  if (ref_refresh_interval < 1) throw ConfigError("train.ref_refresh_interval must be >= 1");
  sde.validate();
  if (!(sde.eta > 0.0)) throw ConfigError("sde.eta must be > 0 for training (no density at 0)");
  suite.validate();
  if (suite.num_classes != dims.num_classes) {
    throw ConfigError("rewards: suite class count differs from policy.num_classes");
  }
  cerm.validate(suite.size());
}

std::size_t TrainConfig::selected_steps() const {
  const double raw = timestep_fraction * static_cast<double>(sde.num_steps);
  // Guard against 0.6 * 10 evaluating to 6.000000000000001.
  const auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(count, 1, sde.num_steps);
}

double importance_ratio(double new_log_prob, double old_log_prob, double clamp_max) {
  if (!std::isfinite(new_log_prob) || !std::isfinite(old_log_prob)) {
    throw NonFiniteError("importance_ratio: non-finite log-probability");
  }
  const double rho = std::exp(new_log_prob - old_log_prob);
  return std::clamp(rho, 1.0 / clamp_max, clamp_max);
}

Surrogate surrogate_objective(const std::vector<std::vector<double>>& ratios,
                              std::span<const double> advantages, double clip_eps) {
  if (ratios.size() != advantages.size() || ratios.empty()) {
    throw ShapeError("surrogate_objective: ratio rows must match advantages");
  }
  Surrogate out;
  out.clipped.resize(ratios.size());
  std::size_t total = 0, clipped = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const auto& row = ratios[i];
    if (row.empty() || row.size() != ratios.front().size()) {
      throw ShapeError("surrogate_objective: ragged ratio grid");
    }
    const double a = advantages[i];
    double acc = 0.0;
    out.clipped[i].resize(row.size());
    for (std::size_t t = 0; t < row.size(); ++t) {
      const double unclipped = row[t] * a;
      const double bounded = std::clamp(row[t], 1.0 - clip_eps, 1.0 + clip_eps) * a;
      const bool use_clipped = bounded < unclipped;
      acc += use_clipped ? bounded : unclipped;
      out.clipped[i][t] = use_clipped;
      clipped += use_clipped ? 1 : 0;
      ++total;
    }
    out.objective += acc / static_cast<double>(row.size());
  }
  out.objective /= static_cast<double>(ratios.size());
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(total);
  return out;
}

SurrogateGradient surrogate_gradient(const FlowPolicy& policy,
                                     std::span<const Trajectory> trajectories,
                                     std::span<const double> advantages,
                                     std::span<const std::size_t> steps, double clip_eps,
                                     double ratio_clamp_max) {
  if (trajectories.size() != advantages.size()) {
    throw ShapeError("surrogate_gradient: one advantage per trajectory required");
  }
  if (steps.empty()) throw DomainError("surrogate_gradient: empty step subset");
  SurrogateGradient out;
  out.gradient = numerics::zeros_like(policy.net());
  out.ratios.assign(trajectories.size(), std::vector<double>(steps.size()));
  std::vector<std::vector<bool>> clamped(trajectories.size(),
                                         std::vector<bool>(steps.size(), false));
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& traj = trajectories[i];
    if (traj.log_probs.size() != traj.num_steps()) {
      throw DomainError("surrogate_gradient: trajectory has no recorded log-probs");
    }
    const auto new_lp = flow::log_prob_under(policy, traj, steps);
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const double old_lp = traj.log_probs[steps[t]];
      const double raw = std::exp(new_lp[t] - old_lp);
      out.ratios[i][t] = importance_ratio(new_lp[t], old_lp, ratio_clamp_max);
      clamped[i][t] = raw != out.ratios[i][t];
    }
  }
  out.surrogate = surrogate_objective(out.ratios, advantages, clip_eps);

  // dJ/d(log p) = A * rho / (G T') on the unclipped, unclamped branch, else 0.
  const double norm = 1.0 / static_cast<double>(trajectories.size() * steps.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    for (std::size_t t = 0; t < steps.size(); ++t) {
      if (out.surrogate.clipped[i][t] || clamped[i][t]) continue;
      const double weight = advantages[i] * out.ratios[i][t] * norm;
      if (weight == 0.0) continue;
      flow::log_prob_with_gradient(policy, trajectories[i], steps[t], weight, out.gradient);
    }
  }
  return out;
}

std::vector<std::size_t> sample_step_subset(std::size_t num_steps, std::size_t count,
                                            RandomSource& rng) {
  if (count == 0 || count > num_steps) throw DomainError("sample_step_subset: bad count");
  std::vector<std::size_t> idx(num_steps);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(idx[i], idx[i + rng.uniform_index(num_steps - i)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Trainer::Trainer(FlowPolicy policy, TrainConfig config)
    : config_(std::move(config)),
      policy_(std::move(policy)),
      reference_(policy_),
      adam_(numerics::AdamState::for_params(policy_.net(), config_.learning_rate)),
      rng_(config_.seed, config_.sde.seed) {
  config_.validate(policy_.dims());
}

StepRecord Trainer::step() {
  const std::size_t index = log_.size();
  if (index % config_.ref_refresh_interval == 0) reference_ = policy_;

  RandomSource step_rng = rng_.split(index);
  const auto& dims = policy_.dims();
  StepRecord rec;
  rec.step = index;
  rec.condition = step_rng.uniform_index(dims.num_classes);

  std::vector<Trajectory> trajectories;
  std::vector<ToySample> samples;
  trajectories.reserve(config_.group_size);
  samples.reserve(config_.group_size);
  RandomSource init_rng = step_rng.split(0);
  const auto shared_noise = numerics::gaussian(init_rng, dims.state_dim());
  for (std::size_t i = 0; i < config_.group_size; ++i) {
    RandomSource rollout_rng = step_rng.split(i + 1);
    try {
      trajectories.push_back(
          config_.shared_initial_noise
              ? flow::sde_sample(reference_, rec.condition, config_.sde, rollout_rng, shared_noise)
              : flow::sde_sample(reference_, rec.condition, config_.sde, rollout_rng));
      samples.push_back(flow::decode(reference_, trajectories.back()));
    } catch (const Error& e) {
      throw RolloutError("train step " + std::to_string(index) + ", rollout " +
                         std::to_string(i) + ": " + e.what());
    }
  }

  const auto matrix = rewards::eval_group(config_.suite, samples);
  rec.cerm = cerm::cerm_step(matrix, config_.cerm, has_prior_ ? &last_cerm_ : nullptr);
  last_cerm_ = rec.cerm;
  has_prior_ = true;
  rec.mixed_mean = std::accumulate(rec.cerm.mixed.begin(), rec.cerm.mixed.end(), 0.0) /
                   static_cast<double>(rec.cerm.mixed.size());

  rec.selected_steps =
      sample_step_subset(config_.sde.num_steps, config_.selected_steps(), step_rng);
  auto grad = surrogate_gradient(policy_, trajectories, rec.cerm.advantages,
                                 rec.selected_steps, config_.clip_eps,
                                 config_.ratio_clamp_max);
  rec.objective = grad.surrogate.objective;
  rec.clip_fraction = grad.surrogate.clip_fraction;
  double ratio_sum = 0.0;
  for (const auto& row : grad.ratios) ratio_sum = std::accumulate(row.begin(), row.end(), ratio_sum);
  rec.mean_ratio = ratio_sum / static_cast<double>(grad.ratios.size() * rec.selected_steps.size());
  rec.grad_norm = std::sqrt(numerics::squared_norm(grad.gradient));

  // Ascent on J is descent on -J.
  numerics::scale(grad.gradient, -1.0);
  numerics::adam_step(policy_.net(), grad.gradient, adam_);
  log_.push_back(rec);
  return rec;
}

TrainResult train(FlowPolicy policy, const TrainConfig& config, const StepCallback& on_step) {
  Trainer trainer(std::move(policy), config);
  for (std::size_t s = 0; s < config.num_steps; ++s) {
    const auto rec = trainer.step();
    if (on_step) on_step(trainer, rec);
  }
  return {trainer.policy(), trainer.log()};
}

EvalStats evaluate_policy(const FlowPolicy& policy, const rewards::RewardSuite& suite,
                          const flow::SdeConfig& sde, std::size_t samples_per_class,
                          std::uint64_t seed) {
  suite.validate();
  if (samples_per_class < 2) throw DomainError("evaluate_policy: need >= 2 samples per class");
  const auto& dims = policy.dims();
  const std::size_t k = suite.size();
  EvalStats st;
  for (const auto& t : suite.terms) st.term_ids.push_back(t.id);
  st.mean.assign(k, 0.0);
  st.std.assign(k, 0.0);
  st.min.assign(k, 1.0);
  st.max.assign(k, 0.0);
  st.per_class_mean.assign(dims.num_classes, std::vector<double>(k, 0.0));
  std::vector<double> sum_sq(k, 0.0);
  RandomSource base(seed, sde.seed);
  for (std::size_t c = 0; c < dims.num_classes; ++c) {
    std::vector<ToySample> group;
    for (std::size_t i = 0; i < samples_per_class; ++i) {
      RandomSource rng = base.split(c * samples_per_class + i);
      group.push_back(flow::decode(policy, flow::sde_sample(policy, c, sde, rng)));
    }
    const auto m = rewards::eval_group(suite, group);
    for (std::size_t i = 0; i < m.group_size; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double r = m(i, j);
        st.mean[j] += r;
        sum_sq[j] += r * r;
        st.min[j] = std::min(st.min[j], r);
        st.max[j] = std::max(st.max[j], r);
        st.per_class_mean[c][j] += r / static_cast<double>(m.group_size);
        st.flagged += m.flagged(i, j) ? 1 : 0;
      }
    }
  }
  st.num_samples = dims.num_classes * samples_per_class;
  const double n = static_cast<double>(st.num_samples);
  for (std::size_t j = 0; j < k; ++j) {
    st.mean[j] /= n;
    st.std[j] = std::sqrt(std::max(0.0, sum_sq[j] / n - st.mean[j] * st.mean[j]));
  }
  return st;
}

void write_log_jsonl(std::ostream& out, const TrainLog& log) {
  for (const auto& r : log) {
    nlohmann::json j;
    j["step"] = r.step;
    j["condition"] = r.condition;
    j["weights"] = r.cerm.weights;
    j["group_means"] = r.cerm.group_means;
    j["sparsities"] = r.cerm.sparsities;
    j["transitions"] = r.cerm.transitions;
    j["mixed_mean"] = r.mixed_mean;
    j["objective"] = r.objective;
    j["grad_norm"] = r.grad_norm;
    j["clip_fraction"] = r.clip_fraction;
    j["mean_ratio"] = r.mean_ratio;
    j["selected_steps"] = r.selected_steps;
    out << j.dump() << '\n';
  }
}

namespace {

std::string fmt(double v) {
  // Shortest round-trip form.
  return nlohmann::json(v).dump();
}

}  // namespace

void write_log_csv(std::ostream& out, const TrainLog& log, const rewards::RewardSuite& suite) {
  out << "step,condition,mixed_mean,objective,grad_norm,clip_fraction,mean_ratio";
  for (const auto& t : suite.terms) out << ",mean_" << t.id;
  for (const auto& t : suite.terms) out << ",weight_" << t.id;
  for (const auto& t : suite.terms) out << ",sparsity_" << t.id;
  for (const auto& t : suite.terms) out << ",transition_" << t.id;
  out << '\n';
  for (const auto& r : log) {
    out << r.step << ',' << r.condition << ',' << fmt(r.mixed_mean) << ',' << fmt(r.objective)
        << ',' << fmt(r.grad_norm) << ',' << fmt(r.clip_fraction) << ',' << fmt(r.mean_ratio);
    for (double v : r.cerm.group_means) out << ',' << fmt(v);
    for (double v : r.cerm.weights) out << ',' << fmt(v);
    for (double v : r.cerm.sparsities) out << ',' << fmt(v);
    for (double v : r.cerm.transitions) out << ',' << fmt(v);
    out << '\n';
  }
}

std::vector<double> mixed_reward_curve(const TrainLog& log) {
  std::vector<double> out;
  out.reserve(log.size());
  for (const auto& r : log) out.push_back(r.mixed_mean);
  return out;
}

std::vector<double> term_mean_curve(const TrainLog& log, std::size_t term) {
  std::vector<double> out;
  out.reserve(log.size());
  for (const auto& r : log) out.push_back(r.cerm.group_means.at(term));
  return out;
}

}  // namespace spgrpo::grpo
