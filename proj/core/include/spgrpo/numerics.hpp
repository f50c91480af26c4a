#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spgrpo/random.hpp"

namespace spgrpo::numerics {

// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool all_finite() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y = W x
std::vector<double> matvec(const DenseMatrix& w, std::span<const double> x);

bool all_finite(std::span<const double> values);

// Fully connected network. Hidden layers use tanh, the final layer is the
// identity. weights[l] has shape layer_sizes[l + 1] x layer_sizes[l].
struct MlpParams {
  std::vector<std::size_t> layer_sizes;
  std::vector<DenseMatrix> weights;
  std::vector<std::vector<double>> biases;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t num_parameters() const;

  // Throws ShapeError / NonFiniteError when the invariants do not hold.
  void validate() const;

  // Visits every scalar parameter in a fixed order (layer, weights then bias).
  template <typename Fn>
  void for_each(Fn&& fn) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (double& w : weights[l].data()) fn(w);
      for (double& b : biases[l]) fn(b);
    }
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (double w : weights[l].data()) fn(w);
      for (double b : biases[l]) fn(b);
    }
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

MlpParams zeros_mlp(std::span<const std::size_t> layer_sizes);
MlpParams zeros_like(const MlpParams& params);
// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases; the output
// layer is additionally scaled by output_gain.
MlpParams init_mlp(std::span<const std::size_t> layer_sizes, RandomSource& rng,
                   double output_gain = 1.0);

void check_same_shape(const MlpParams& a, const MlpParams& b);
// y += alpha * x
void axpy(double alpha, const MlpParams& x, MlpParams& y);
void scale(MlpParams& params, double alpha);
double squared_norm(const MlpParams& params);
std::vector<double> flatten(const MlpParams& params);
void unflatten(std::span<const double> values, MlpParams& params);

// Layer inputs and outputs recorded during a forward pass.
// activations[0] is the network input, activations[l + 1] the output of layer l.
struct MlpCache {
  std::vector<std::vector<double>> activations;
};

struct MlpForward {
  std::vector<double> output;
  MlpCache cache;
};

MlpForward mlp_forward(const MlpParams& params, std::span<const double> input);

struct MlpBackward {
  MlpParams param_grads;
  std::vector<double> input_grad;
};

MlpBackward mlp_backward(const MlpParams& params, const MlpCache& cache,
                         std::span<const double> upstream_grad);

// Adds the parameter gradient into `grads` instead of allocating. When
// input_grad is non-null it receives the gradient w.r.t. the input.
void mlp_backward_accumulate(const MlpParams& params, const MlpCache& cache,
                             std::span<const double> upstream_grad, MlpParams& grads,
                             std::vector<double>* input_grad = nullptr);

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const MlpParams& params, double learning_rate,
                              double beta1 = 0.9, double beta2 = 0.999,
                              double epsilon = 1e-8);
};

// One Adam update descending along `grads`. A non-finite gradient throws
// NonFiniteError before anything is modified.
void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state);

// Centered moving average; windows that run past either end are truncated.
std::vector<double> smooth_curve(std::span<const double> values, std::size_t window);

}  // namespace spgrpo::numerics
