#pragma once

#include "amtgan/rng.hpp"
#include "amtgan/types.hpp"

namespace amtgan::diversity {

struct DiversityConfig {
  double p = 0.5;
  double scale_low = 0.8;
  double scale_high = 1.0;
  double noise_sigma = 0.05;

  // Throws ConfigError unless 0 <= p <= 1, 0 < low <= high, sigma >= 0.
  void validate() const;
};

// Bilinear resize by u ~ U(low, high), then back to the original size.
Tensor random_resize(const Tensor& image, double scale_low, double scale_high, Rng& rng);

// Adds i.i.d. N(0, sigma^2) noise and clamps to [-1, 1].
Tensor gaussian_noise(const Tensor& image, double sigma, Rng& rng);

// With probability p: resize then noise. Otherwise the input is returned unchanged.
Tensor transform(const Tensor& image, const DiversityConfig& config, Rng& rng);

// Same as transform, also reporting whether the branch was taken.
Tensor transform(const Tensor& image, const DiversityConfig& config, Rng& rng, bool& applied);

}  // namespace amtgan::diversity
