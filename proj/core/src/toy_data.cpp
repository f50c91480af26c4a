#include "spgrpo/toy_data.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "spgrpo/errors.hpp"
#include "spgrpo/numerics.hpp"

namespace spgrpo {

ToySample ToySample::from_state(std::span<const double> state, std::size_t frames,
                                std::size_t frame_dim, std::size_t condition) {
  if (frames < 2) throw ShapeError("ToySample: need at least two frames");
  if (state.size() != frames * frame_dim) {
    throw ShapeError("ToySample: state length " + std::to_string(state.size()) +
                     " != " + std::to_string(frames) + "x" + std::to_string(frame_dim));
  }
  if (!numerics::all_finite(state)) throw NonFiniteError("ToySample: non-finite frame");
  return ToySample{frames, frame_dim, condition, {state.begin(), state.end()}};
}

double target_angle(std::size_t condition, std::size_t num_classes) {
  if (num_classes == 0 || condition >= num_classes) {
    throw DomainError("target_angle: class " + std::to_string(condition) +
                      " out of range");
  }
  return 2.0 * std::numbers::pi * static_cast<double>(condition) /
         static_cast<double>(num_classes);
}

ToySample CircleDataset::draw(std::size_t condition, numerics::RandomSource& rng) const {
  if (frames < 2) throw ShapeError("CircleDataset: need at least two frames");
  const double target = target_angle(condition, num_classes);
  ToySample s{frames, 2, condition, std::vector<double>(frames * 2)};
  for (std::size_t t = 0; t < frames; ++t) {
    const double angle = target - angular_velocity * static_cast<double>(frames - 1 - t);
    s.values[2 * t] = std::cos(angle) + jitter * rng.normal();
    s.values[2 * t + 1] = std::sin(angle) + jitter * rng.normal();
  }
  return s;
}

std::vector<ToySample> CircleDataset::generate(std::size_t n,
                                               numerics::RandomSource& rng) const {
  std::vector<ToySample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(draw(rng.uniform_index(num_classes), rng));
  return out;
}

}  // namespace spgrpo
