#include "spgrpo/flow_policy.hpp"

#include <cmath>
#include <numbers>

#include <json.hpp>

#include "spgrpo/errors.hpp"

namespace spgrpo::flow {
namespace {

void check_finite(std::span<const double> v, const char* what) {
  if (!numerics::all_finite(v)) throw RolloutError(std::string(what) + ": non-finite state");
}

}  // namespace

FlowPolicy::FlowPolicy(FlowDims dims, MlpParams net, DenseMatrix condition_embeddings)
    : dims_(dims), net_(std::move(net)), embeddings_(std::move(condition_embeddings)) {
  if (dims_.frames < 2 || dims_.frame_dim == 0 || dims_.num_classes == 0) {
    throw ShapeError("FlowPolicy: invalid dimensions");
  }
  net_.validate();
  if (net_.input_size() != dims_.net_input_dim() || net_.output_size() != dims_.state_dim()) {
    throw ShapeError("FlowPolicy: network must map " + std::to_string(dims_.net_input_dim()) +
                     " inputs to " + std::to_string(dims_.state_dim()) + " outputs");
  }
  if (embeddings_.rows() != dims_.num_classes || embeddings_.cols() != dims_.embed_dim) {
    throw ShapeError("FlowPolicy: embedding table must be classes x embed_dim");
  }
}

FlowPolicy FlowPolicy::create(const FlowDims& dims, std::span<const std::size_t> hidden,
                              RandomSource& rng) {
  std::vector<std::size_t> sizes{dims.net_input_dim()};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(dims.state_dim());
  MlpParams net = numerics::init_mlp(sizes, rng);
  DenseMatrix emb(dims.num_classes, dims.embed_dim);
  for (double& e : emb.data()) e = rng.normal();
  return FlowPolicy(dims, std::move(net), std::move(emb));
}

std::vector<double> FlowPolicy::net_input(std::span<const double> x, double t,
                                          std::size_t condition) const {
  if (x.size() != dims_.state_dim()) {
    throw ShapeError("velocity: state length " + std::to_string(x.size()) +
                     " != " + std::to_string(dims_.state_dim()));
  }
  if (condition >= dims_.num_classes) {
    throw DomainError("velocity: condition " + std::to_string(condition) + " out of range");
  }
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("velocity: flow time outside [0, 1]");
  std::vector<double> in;
  in.reserve(dims_.net_input_dim());
  in.insert(in.end(), x.begin(), x.end());
  in.push_back(t);
  const auto emb = embeddings_.row(condition);
  in.insert(in.end(), emb.begin(), emb.end());
  return in;
}

numerics::Checkpoint FlowPolicy::to_checkpoint() const {
  numerics::Checkpoint ck;
  ck.net = net_;
  ck.attributes = {{"frames", static_cast<std::int64_t>(dims_.frames)},
                   {"frame_dim", static_cast<std::int64_t>(dims_.frame_dim)},
                   {"num_classes", static_cast<std::int64_t>(dims_.num_classes)},
                   {"embed_dim", static_cast<std::int64_t>(dims_.embed_dim)}};
  ck.tensors.emplace("condition_embeddings", embeddings_);
  return ck;
}

FlowPolicy FlowPolicy::from_checkpoint(const numerics::Checkpoint& ck) {
  auto attr = [&](const char* name) -> std::size_t {
    auto it = ck.attributes.find(name);
    if (it == ck.attributes.end() || it->second <= 0) {
      throw IoError(std::string("policy checkpoint: missing attribute ") + name);
    }
    return static_cast<std::size_t>(it->second);
  };
  FlowDims dims{attr("frames"), attr("frame_dim"), attr("num_classes"), attr("embed_dim")};
  auto emb = ck.tensors.find("condition_embeddings");
  if (emb == ck.tensors.end()) throw IoError("policy checkpoint: missing condition_embeddings");
  return FlowPolicy(dims, ck.net, emb->second);
}

std::vector<double> velocity(const FlowPolicy& policy, std::span<const double> x, double t,
                             std::size_t condition) {
  auto out = numerics::mlp_forward(policy.net(), policy.net_input(x, t, condition)).output;
  if (!numerics::all_finite(out)) throw NonFiniteError("velocity: non-finite output");
  return out;
}

std::vector<double> score_from_velocity(std::span<const double> x, double t,
                                        std::span<const double> v, double t_min) {
  if (t < t_min) throw DomainError("score_from_velocity: t below t_min");
  if (t > 1.0) throw DomainError("score_from_velocity: t above 1");
  if (x.size() != v.size()) throw ShapeError("score_from_velocity: length mismatch");
  std::vector<double> s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = -(x[i] + (1.0 - t) * v[i]) / t;
  return s;
}

void SdeConfig::validate() const {
  if (num_steps < 1) throw ConfigError("sde.num_steps must be >= 1");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("sde.eta must be >= 0");
  if (!(t_min > 0.0 && t_min < 1.0)) throw ConfigError("sde.t_min must lie in (0, 1)");
}

std::vector<double> time_grid(std::size_t num_steps, double t_end) {
  if (num_steps < 1) throw DomainError("time_grid: need at least one step");
  if (!(t_end >= 0.0 && t_end < 1.0)) throw DomainError("time_grid: t_end outside [0, 1)");
  const double h = (1.0 - t_end) / static_cast<double>(num_steps);
  std::vector<double> times(num_steps + 1);
  for (std::size_t k = 0; k < num_steps; ++k) times[k] = 1.0 - static_cast<double>(k) * h;
  times[num_steps] = t_end;
  return times;
}

std::vector<double> transition_mean(std::span<const double> x, double t, double dt,
                                    double sigma, std::span<const double> v, double t_min) {
  const auto score = score_from_velocity(x, t, v, t_min);
  const double half_var = 0.5 * sigma * sigma;
  std::vector<double> mean(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mean[i] = x[i] + dt * (v[i] - half_var * score[i]);
  }
  return mean;
}

double gaussian_log_density(std::span<const double> x, std::span<const double> mean,
                            double std) {
  if (x.size() != mean.size()) throw ShapeError("gaussian_log_density: length mismatch");
  if (!(std > 0.0)) throw DomainError("gaussian_log_density: std must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = x[i] - mean[i];
    sq += r * r;
  }
  const double var = std * std;
  return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi * var) -
         sq / (2.0 * var);
}

std::vector<std::vector<double>> ode_integrate(const FlowPolicy& policy,
                                               std::size_t condition,
                                               std::span<const double> initial,
                                               std::size_t num_steps, double t_end) {
  const auto times = time_grid(num_steps, t_end);
  std::vector<std::vector<double>> states;
  states.reserve(num_steps + 1);
  states.emplace_back(initial.begin(), initial.end());
  for (std::size_t k = 0; k < num_steps; ++k) {
    const auto& x = states.back();
    const auto v = velocity(policy, x, times[k], condition);
    const double dt = times[k + 1] - times[k];
    std::vector<double> next(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) next[i] = x[i] + dt * v[i];
    check_finite(next, "ode_sample");
    states.push_back(std::move(next));
  }
  return states;
}

ToySample ode_sample(const FlowPolicy& policy, std::size_t condition, std::size_t num_steps,
                     RandomSource& rng, double t_end) {
  const auto& d = policy.dims();
  const auto noise = numerics::gaussian(rng, d.state_dim());
  const auto states = ode_integrate(policy, condition, noise, num_steps, t_end);
  return ToySample::from_state(states.back(), d.frames, d.frame_dim, condition);
}

Trajectory sde_sample(const FlowPolicy& policy, std::size_t condition,
                      const SdeConfig& config, RandomSource& rng) {
  const auto initial = numerics::gaussian(rng, policy.dims().state_dim());
  return sde_sample(policy, condition, config, rng, initial);
}

Trajectory sde_sample(const FlowPolicy& policy, std::size_t condition,
                      const SdeConfig& config, RandomSource& rng,
                      std::span<const double> initial) {
  config.validate();
  const std::size_t n = policy.dims().state_dim();
  if (initial.size() != n) throw ShapeError("sde_sample: initial state has wrong length");
  Trajectory traj;
  traj.condition = condition;
  traj.eta = config.eta;
  traj.times = time_grid(config.num_steps, config.t_min);
  traj.states.reserve(config.num_steps + 1);
  traj.states.emplace_back(initial.begin(), initial.end());
  for (std::size_t k = 0; k < config.num_steps; ++k) {
    const auto& x = traj.states.back();
    const double t = traj.times[k];
    const double dt = traj.times[k + 1] - t;
    const double sigma = config.eta * t;
    const auto v = velocity(policy, x, t, condition);
    auto mean = transition_mean(x, t, dt, sigma, v, config.t_min);
    const double std = sigma * std::sqrt(std::abs(dt));
    const auto z = numerics::gaussian(rng, n);
    std::vector<double> next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = mean[i] + std * z[i];
    check_finite(next, "sde_sample");
    if (traj.has_density()) traj.log_probs.push_back(gaussian_log_density(next, mean, std));
    traj.step_means.push_back(std::move(mean));
    traj.step_stds.push_back(std);
    traj.states.push_back(std::move(next));
  }
  return traj;
}

ToySample decode(const FlowPolicy& policy, const Trajectory& trajectory) {
  const auto& x = trajectory.states.back();
  const double t = trajectory.times.back();
  const auto v = velocity(policy, x, t, trajectory.condition);
  std::vector<double> x0(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x0[i] = x[i] - t * v[i];
  const auto& d = policy.dims();
  return ToySample::from_state(x0, d.frames, d.frame_dim, trajectory.condition);
}

namespace {

struct StepEval {
  double log_prob;
  std::vector<double> mean;
  numerics::MlpForward forward;
};

StepEval evaluate_step(const FlowPolicy& policy, const Trajectory& traj, std::size_t k) {
  if (!traj.has_density()) {
    throw DomainError("log_prob_under: deterministic trajectory (eta = 0) has no density");
  }
  if (k >= traj.num_steps()) throw DomainError("log_prob_under: step index out of range");
  const auto& x = traj.states[k];
  const double t = traj.times[k];
  const double dt = traj.times[k + 1] - t;
  const double sigma = traj.eta * t;
  auto fwd = numerics::mlp_forward(policy.net(), policy.net_input(x, t, traj.condition));
  // The trajectory's own t_min is its final time; every evaluated t is above it.
  auto mean = transition_mean(x, t, dt, sigma, fwd.output, traj.times.back());
  const double lp = gaussian_log_density(traj.states[k + 1], mean, traj.step_stds[k]);
  return {lp, std::move(mean), std::move(fwd)};
}

}  // namespace

std::vector<double> log_prob_under(const FlowPolicy& policy, const Trajectory& trajectory,
                                   std::span<const std::size_t> steps) {
  std::vector<double> out;
  out.reserve(steps.size());
  for (auto k : steps) out.push_back(evaluate_step(policy, trajectory, k).log_prob);
  return out;
}

double log_prob_with_gradient(const FlowPolicy& policy, const Trajectory& trajectory,
                              std::size_t step, double weight, MlpParams& grads) {
  auto eval = evaluate_step(policy, trajectory, step);
  if (weight == 0.0) return eval.log_prob;
  const auto& next = trajectory.states[step + 1];
  const double t = trajectory.times[step];
  const double dt = trajectory.times[step + 1] - t;
  const double sigma = trajectory.eta * t;
  const double var = trajectory.step_stds[step] * trajectory.step_stds[step];
  // mean = x + dt * (v + sigma^2 (x + (1 - t) v) / (2 t)), so dmean/dv is a scalar.
  const double dmean_dv = dt * (1.0 + sigma * sigma * (1.0 - t) / (2.0 * t));
  std::vector<double> upstream(next.size());
  for (std::size_t i = 0; i < next.size(); ++i) {
    upstream[i] = weight * (next[i] - eval.mean[i]) / var * dmean_dv;
  }
  numerics::mlp_backward_accumulate(policy.net(), eval.forward.cache, upstream, grads);
  return eval.log_prob;
}

std::string trajectory_record(const Trajectory& trajectory) {
  nlohmann::json j;
  j["condition"] = trajectory.condition;
  j["eta"] = trajectory.eta;
  j["times"] = trajectory.times;
  j["states"] = trajectory.states;
  j["step_means"] = trajectory.step_means;
  j["step_stds"] = trajectory.step_stds;
  if (trajectory.has_density()) {
    j["log_probs"] = trajectory.log_probs;
  } else {
    j["log_probs"] = nullptr;
  }
  return j.dump();
}

namespace {

// Accumulates the batch loss and, when grads is non-null, its gradient.
double flow_matching_batch(const FlowPolicy& policy, std::span<const ToySample> batch,
                           RandomSource& rng, MlpParams* grads) {
  const auto& d = policy.dims();
  const std::size_t n = d.state_dim();
  const double norm = 1.0 / static_cast<double>(batch.size() * n);
  double loss = 0.0;
  std::vector<double> xt(n), residual(n);
  for (const auto& sample : batch) {
    if (sample.values.size() != n || sample.frames != d.frames ||
        sample.frame_dim != d.frame_dim || sample.condition >= d.num_classes) {
      throw ShapeError("pretrain: sample does not match policy dimensions");
    }
    const double t = rng.uniform();
    const auto noise = numerics::gaussian(rng, n);
    for (std::size_t i = 0; i < n; ++i) xt[i] = (1.0 - t) * sample.values[i] + t * noise[i];
    auto fwd = numerics::mlp_forward(policy.net(), policy.net_input(xt, t, sample.condition));
    for (std::size_t i = 0; i < n; ++i) {
      residual[i] = fwd.output[i] - (noise[i] - sample.values[i]);
      loss += residual[i] * residual[i] * norm;
    }
    if (grads != nullptr) {
      for (auto& r : residual) r *= 2.0 * norm;
      numerics::mlp_backward_accumulate(policy.net(), fwd.cache, residual, *grads);
    }
  }
  return loss;
}

}  // namespace

double flow_matching_loss(const FlowPolicy& policy, std::span<const ToySample> batch,
                          RandomSource& rng) {
  if (batch.empty()) throw DomainError("flow_matching_loss: empty batch");
  return flow_matching_batch(policy, batch, rng, nullptr);
}

PretrainResult pretrain_flow_matching(FlowPolicy policy, std::span<const ToySample> dataset,
                                      const PretrainOptions& options, RandomSource& rng) {
  if (dataset.empty()) throw DomainError("pretrain_flow_matching: empty dataset");
  if (options.batch_size == 0) throw ConfigError("pretrain.batch_size must be >= 1");
  PretrainResult result{std::move(policy), {}};
  auto adam = numerics::AdamState::for_params(result.policy.net(), options.learning_rate);
  std::vector<ToySample> batch(options.batch_size);
  result.loss_curve.reserve(options.steps);
  for (std::size_t step = 0; step < options.steps; ++step) {
    for (auto& s : batch) s = dataset[rng.uniform_index(dataset.size())];
    auto grads = numerics::zeros_like(result.policy.net());
    const double loss = flow_matching_batch(result.policy, batch, rng, &grads);
    numerics::adam_step(result.policy.net(), grads, adam);
    result.loss_curve.push_back(loss);
  }
  return result;
}

}  // namespace spgrpo::flow
