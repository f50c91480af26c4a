#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spgrpo/checkpoint.hpp"
#include "spgrpo/numerics.hpp"
#include "spgrpo/random.hpp"
#include "spgrpo/toy_data.hpp"

namespace spgrpo::flow {

using numerics::DenseMatrix;
using numerics::MlpParams;
using numerics::RandomSource;

// Time convention: t = 1 is pure noise, t = 0 is data, and the interpolation
// path is x_t = (1 - t) * x_data + t * noise.
inline constexpr double kDefaultTMin = 0.04;
inline constexpr std::array<std::size_t, 2> kDefaultHidden{128, 128};

struct FlowDims {
  std::size_t frames = 8;
  std::size_t frame_dim = 2;
  std::size_t num_classes = 8;
  std::size_t embed_dim = 8;

  std::size_t state_dim() const { return frames * frame_dim; }
  std::size_t net_input_dim() const { return state_dim() + 1 + embed_dim; }

  friend bool operator==(const FlowDims&, const FlowDims&) = default;
};

// Conditional velocity field v(x, t, class). The network sees the flattened
// state, the flow time and a fixed per-class embedding row.
class FlowPolicy {
 public:
  FlowPolicy(FlowDims dims, MlpParams net, DenseMatrix condition_embeddings);

  // Random network with the given hidden widths and N(0, 1) embeddings.
  static FlowPolicy create(const FlowDims& dims, std::span<const std::size_t> hidden,
                           RandomSource& rng);

  const FlowDims& dims() const { return dims_; }
  const MlpParams& net() const { return net_; }
  MlpParams& net() { return net_; }
  const DenseMatrix& condition_embeddings() const { return embeddings_; }

  std::vector<double> net_input(std::span<const double> x, double t,
                                std::size_t condition) const;

  numerics::Checkpoint to_checkpoint() const;
  static FlowPolicy from_checkpoint(const numerics::Checkpoint& checkpoint);

  friend bool operator==(const FlowPolicy&, const FlowPolicy&) = default;

 private:
  FlowDims dims_;
  MlpParams net_;
  DenseMatrix embeddings_;
};

std::vector<double> velocity(const FlowPolicy& policy, std::span<const double> x, double t,
                             std::size_t condition);

// Marginal score implied by the linear path: -(x + (1 - t) v) / t.
// Throws DomainError when t < t_min.
std::vector<double> score_from_velocity(std::span<const double> x, double t,
                                        std::span<const double> v,
                                        double t_min = kDefaultTMin);

struct SdeConfig {
  std::size_t num_steps = 16;
  double eta = 0.5;
  double t_min = kDefaultTMin;
  std::uint64_t seed = 0;

  void validate() const;
};

// num_steps + 1 decreasing times from 1 to t_end with uniform spacing; the
// last entry is exactly t_end.
std::vector<double> time_grid(std::size_t num_steps, double t_end);

// One Euler-Maruyama rollout. step k moves states[k] (time times[k]) to
// states[k + 1] through N(step_means[k], step_stds[k]^2 I).
struct Trajectory {
  std::size_t condition = 0;
  double eta = 0.0;
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> step_means;
  std::vector<double> step_stds;
  // Empty when eta == 0: a deterministic step has no density.
  std::vector<double> log_probs;

  std::size_t num_steps() const { return step_stds.size(); }
  bool has_density() const { return eta > 0.0; }
};

// Drift mean x + dt * (v - sigma^2 / 2 * score).
std::vector<double> transition_mean(std::span<const double> x, double t, double dt,
                                    double sigma, std::span<const double> v,
                                    double t_min = kDefaultTMin);

// log N(x; mean, std^2 I).
double gaussian_log_density(std::span<const double> x, std::span<const double> mean,
                            double std);

// Explicit Euler integration of dx = v dt from `initial` at t = 1 down to
// t_end. Returns all num_steps + 1 states.
std::vector<std::vector<double>> ode_integrate(const FlowPolicy& policy,
                                               std::size_t condition,
                                               std::span<const double> initial,
                                               std::size_t num_steps, double t_end = 0.0);

// Draws the initial noise from rng and integrates to t_end.
ToySample ode_sample(const FlowPolicy& policy, std::size_t condition, std::size_t num_steps,
                     RandomSource& rng, double t_end = 0.0);

Trajectory sde_sample(const FlowPolicy& policy, std::size_t condition,
                      const SdeConfig& config, RandomSource& rng);

// Same, starting from a given state at t = 1 instead of fresh noise.
Trajectory sde_sample(const FlowPolicy& policy, std::size_t condition,
                      const SdeConfig& config, RandomSource& rng,
                      std::span<const double> initial);

// Maps the final state at t_min to a sample by one deterministic Euler step
// to t = 0 under `policy`.
ToySample decode(const FlowPolicy& policy, const Trajectory& trajectory);

// Log-densities of the recorded next states at the selected steps, with the
// transition mean recomputed under `policy` and the std taken from the
// trajectory. Throws DomainError for a deterministic trajectory.
std::vector<double> log_prob_under(const FlowPolicy& policy, const Trajectory& trajectory,
                                   std::span<const std::size_t> steps);

// log_prob_under for a single step, also adding weight * d(log p)/d(params)
// into `grads`.
double log_prob_with_gradient(const FlowPolicy& policy, const Trajectory& trajectory,
                              std::size_t step, double weight, MlpParams& grads);

// One JSON object on a single line (no trailing newline).
std::string trajectory_record(const Trajectory& trajectory);

struct PretrainOptions {
  std::size_t steps = 2000;
  std::size_t batch_size = 64;
  double learning_rate = 2e-3;
};

struct PretrainResult {
  FlowPolicy policy;
  std::vector<double> loss_curve;
};

// Mean squared conditional flow-matching residual
// |v(x_t, t, c) - (noise - x_data)|^2 / state_dim over the batch, with t and
// the noise drawn from rng.
double flow_matching_loss(const FlowPolicy& policy, std::span<const ToySample> batch,
                          RandomSource& rng);

PretrainResult pretrain_flow_matching(FlowPolicy policy, std::span<const ToySample> dataset,
                                      const PretrainOptions& options, RandomSource& rng);

}  // namespace spgrpo::flow
