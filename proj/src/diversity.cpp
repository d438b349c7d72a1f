#include "amtgan/diversity.hpp"

#include <algorithm>
#include <cmath>

#include "amtgan/error.hpp"

namespace amtgan::diversity {

namespace F = torch::nn::functional;

void DiversityConfig::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("diversity.p must lie in [0, 1]");
  if (!(scale_low > 0.0 && scale_low <= scale_high)) {
    throw ConfigError("diversity scale range must satisfy 0 < low <= high");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("diversity.sigma must be >= 0");
}

Tensor random_resize(const Tensor& image, double scale_low, double scale_high, Rng& rng) {
  const double u = rng.uniform(scale_low, scale_high);
  const int64_t h = image.size(-2);
  const int64_t w = image.size(-1);
  const int64_t rh = std::max<int64_t>(1, std::llround(static_cast<double>(h) * u));
  const int64_t rw = std::max<int64_t>(1, std::llround(static_cast<double>(w) * u));
  if (rh == h && rw == w) return image;
  const auto opts = [](int64_t a, int64_t b) {
    return F::InterpolateFuncOptions()
        .size(std::vector<int64_t>{a, b})
        .mode(torch::kBilinear)
        .align_corners(false);
  };
  const Tensor small = F::interpolate(image, opts(rh, rw));
  return F::interpolate(small, opts(h, w));
}

Tensor gaussian_noise(const Tensor& image, double sigma, Rng& rng) {
  const auto seed = rng.fork_seed();
  if (sigma == 0.0) return image;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const Tensor noise = torch::randn(image.sizes(), gen, image.options().requires_grad(false));
  return (image + sigma * noise).clamp(-1.0, 1.0);
}

Tensor transform(const Tensor& image, const DiversityConfig& config, Rng& rng, bool& applied) {
  applied = rng.bernoulli(config.p);
  if (!applied) return image;
  return gaussian_noise(random_resize(image, config.scale_low, config.scale_high, rng),
                        config.noise_sigma, rng);
}

Tensor transform(const Tensor& image, const DiversityConfig& config, Rng& rng) {
  bool applied = false;
  return transform(image, config, rng, applied);
}

}  // namespace amtgan::diversity
