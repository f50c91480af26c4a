#include "spgrpo/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spgrpo/errors.hpp"

namespace spgrpo::numerics {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("DenseMatrix: data length " + std::to_string(data_.size()) +
                     " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

bool DenseMatrix::all_finite() const { return numerics::all_finite(data_); }

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

std::vector<double> matvec(const DenseMatrix& w, std::span<const double> x) {
  if (x.size() != w.cols()) {
    throw ShapeError("matvec: input length " + std::to_string(x.size()) +
                     " != cols " + std::to_string(w.cols()));
  }
  std::vector<double> y(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

std::size_t MlpParams::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

void MlpParams::validate() const {
  if (layer_sizes.size() < 2) throw ShapeError("MlpParams: need at least two layer sizes");
  if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size()) {
    throw ShapeError("MlpParams: layer count mismatch");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (layer_sizes[l] == 0 || layer_sizes[l + 1] == 0) {
      throw ShapeError("MlpParams: zero-width layer");
    }
    if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l] ||
        biases[l].size() != layer_sizes[l + 1]) {
      throw ShapeError("MlpParams: layer " + std::to_string(l) + " does not chain");
    }
    if (!weights[l].all_finite() || !all_finite(biases[l])) {
      throw NonFiniteError("MlpParams: non-finite parameter in layer " + std::to_string(l));
    }
  }
}

MlpParams zeros_mlp(std::span<const std::size_t> layer_sizes) {
  MlpParams p;
  p.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  if (p.layer_sizes.size() < 2) throw ShapeError("zeros_mlp: need at least two layer sizes");
  for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
    p.weights.emplace_back(p.layer_sizes[l + 1], p.layer_sizes[l]);
    p.biases.emplace_back(p.layer_sizes[l + 1], 0.0);
  }
  return p;
}

MlpParams zeros_like(const MlpParams& params) { return zeros_mlp(params.layer_sizes); }

MlpParams init_mlp(std::span<const std::size_t> layer_sizes, RandomSource& rng,
                   double output_gain) {
  MlpParams p = zeros_mlp(layer_sizes);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.layer_sizes[l]));
    const double gain = (l + 1 == p.num_layers()) ? output_gain : 1.0;
    for (double& w : p.weights[l].data()) w = gain * bound * (2.0 * rng.uniform() - 1.0);
  }
  return p;
}

void check_same_shape(const MlpParams& a, const MlpParams& b) {
  if (a.layer_sizes != b.layer_sizes || a.weights.size() != b.weights.size()) {
    throw ShapeError("parameter sets have different layer sizes");
  }
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    if (a.weights[l].rows() != b.weights[l].rows() ||
        a.weights[l].cols() != b.weights[l].cols() ||
        a.biases[l].size() != b.biases[l].size()) {
      throw ShapeError("parameter sets differ in layer " + std::to_string(l));
    }
  }
}

void axpy(double alpha, const MlpParams& x, MlpParams& y) {
  check_same_shape(x, y);
  for (std::size_t l = 0; l < x.weights.size(); ++l) {
    auto xs = x.weights[l].data();
    auto ys = y.weights[l].data();
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] += alpha * xs[i];
    for (std::size_t i = 0; i < x.biases[l].size(); ++i) y.biases[l][i] += alpha * x.biases[l][i];
  }
}

void scale(MlpParams& params, double alpha) {
  params.for_each([alpha](double& v) { v *= alpha; });
}

double squared_norm(const MlpParams& params) {
  double acc = 0.0;
  params.for_each([&acc](double v) { acc += v * v; });
  return acc;
}

std::vector<double> flatten(const MlpParams& params) {
  std::vector<double> out;
  out.reserve(params.num_parameters());
  params.for_each([&out](double v) { out.push_back(v); });
  return out;
}

void unflatten(std::span<const double> values, MlpParams& params) {
  if (values.size() != params.num_parameters()) {
    throw ShapeError("unflatten: expected " + std::to_string(params.num_parameters()) +
                     " values, got " + std::to_string(values.size()));
  }
  std::size_t i = 0;
  params.for_each([&](double& v) { v = values[i++]; });
}

MlpForward mlp_forward(const MlpParams& params, std::span<const double> input) {
  if (params.layer_sizes.empty() || input.size() != params.input_size()) {
    throw ShapeError("mlp_forward: input length " + std::to_string(input.size()) +
                     " != " +
                     std::to_string(params.layer_sizes.empty() ? 0 : params.input_size()));
  }
  MlpForward result;
  auto& acts = result.cache.activations;
  acts.reserve(params.num_layers() + 1);
  acts.emplace_back(input.begin(), input.end());
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    std::vector<double> z = matvec(params.weights[l], acts.back());
    const bool hidden = l + 1 < params.num_layers();
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] += params.biases[l][i];
      if (hidden) z[i] = std::tanh(z[i]);
    }
    acts.push_back(std::move(z));
  }
  result.output = acts.back();
  return result;
}

void mlp_backward_accumulate(const MlpParams& params, const MlpCache& cache,
                             std::span<const double> upstream_grad, MlpParams& grads,
                             std::vector<double>* input_grad) {
  const std::size_t layers = params.num_layers();
  if (cache.activations.size() != layers + 1) {
    throw ShapeError("mlp_backward: cache has wrong layer count");
  }
  for (std::size_t l = 0; l <= layers; ++l) {
    if (cache.activations[l].size() != params.layer_sizes[l]) {
      throw ShapeError("mlp_backward: cache does not match parameters at layer " +
                       std::to_string(l));
    }
  }
  if (upstream_grad.size() != params.output_size()) {
    throw ShapeError("mlp_backward: upstream gradient length mismatch");
  }
  check_same_shape(params, grads);

  // delta holds dLoss/d(pre-activation) of the current layer.
  std::vector<double> delta(upstream_grad.begin(), upstream_grad.end());
  for (std::size_t l = layers; l-- > 0;) {
    const auto& in = cache.activations[l];
    const auto& w = params.weights[l];
    auto& gw = grads.weights[l];
    for (std::size_t r = 0; r < w.rows(); ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      auto grow = gw.row(r);
      for (std::size_t c = 0; c < w.cols(); ++c) grow[c] += d * in[c];
      grads.biases[l][r] += d;
    }
    if (l == 0 && input_grad == nullptr) break;
    std::vector<double> prev(w.cols(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const auto wrow = w.row(r);
      for (std::size_t c = 0; c < w.cols(); ++c) prev[c] += wrow[c] * d;
    }
    if (l > 0) {
      // Layer l-1 is hidden: tanh'(z) = 1 - a^2.
      for (std::size_t c = 0; c < prev.size(); ++c) prev[c] *= 1.0 - in[c] * in[c];
    }
    delta = std::move(prev);
  }
  if (input_grad != nullptr) *input_grad = std::move(delta);
}

MlpBackward mlp_backward(const MlpParams& params, const MlpCache& cache,
                         std::span<const double> upstream_grad) {
  MlpBackward result{zeros_like(params), {}};
  mlp_backward_accumulate(params, cache, upstream_grad, result.param_grads,
                          &result.input_grad);
  return result;
}

AdamState AdamState::for_params(const MlpParams& params, double learning_rate,
                                double beta1, double beta2, double epsilon) {
  AdamState s;
  s.first_moment = zeros_like(params);
  s.second_moment = zeros_like(params);
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state) {
  check_same_shape(params, grads);
  check_same_shape(params, state.first_moment);
  check_same_shape(params, state.second_moment);
  bool finite = true;
  grads.for_each([&finite](double g) { finite = finite && std::isfinite(g); });
  if (!finite) throw NonFiniteError("adam_step: non-finite gradient, update rejected");

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);

  auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> m,
                    std::span<double> v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  };
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    update(params.weights[l].data(), grads.weights[l].data(),
           state.first_moment.weights[l].data(), state.second_moment.weights[l].data());
    update(params.biases[l], grads.biases[l], state.first_moment.biases[l],
           state.second_moment.biases[l]);
  }
}

std::vector<double> smooth_curve(std::span<const double> values, std::size_t window) {
  if (window == 0) throw DomainError("smooth_curve: window must be >= 1");
  const std::size_t left = (window - 1) / 2;
  const std::size_t right = window / 2;
  const std::size_t n = values.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= left ? i - left : 0;
    const std::size_t hi = std::min(n - 1, i + right);
    double acc = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) acc += values[j];
    out[i] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

}  // namespace spgrpo::numerics
