#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spgrpo/random.hpp"

namespace spgrpo {

// A short sequence of T frames, each a D-dimensional vector, generated for a
// prompt class. Frames are stored contiguously (frame-major).
struct ToySample {
  std::size_t frames = 0;
  std::size_t frame_dim = 0;
  std::size_t condition = 0;
  std::vector<double> values;

  std::span<const double> frame(std::size_t t) const {
    return {values.data() + t * frame_dim, frame_dim};
  }

  // Throws ShapeError if the state length is not frames * frame_dim or
  // frames < 2, NonFiniteError on non-finite entries.
  static ToySample from_state(std::span<const double> state, std::size_t frames,
                              std::size_t frame_dim, std::size_t condition);
};

// Angle the final frame of class `condition` should point at.
double target_angle(std::size_t condition, std::size_t num_classes);

// Sequences on the unit circle rotating at a constant angular velocity and
// ending at the class target angle, with isotropic Gaussian jitter.
struct CircleDataset {
  std::size_t frames = 8;
  std::size_t num_classes = 8;
  double angular_velocity = 0.2;
  double jitter = 0.01;

  ToySample draw(std::size_t condition, numerics::RandomSource& rng) const;
  // n samples with uniformly drawn classes.
  std::vector<ToySample> generate(std::size_t n, numerics::RandomSource& rng) const;
};

}  // namespace spgrpo
