#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include <torch/torch.h>

#include "amtgan/rng.hpp"
#include "amtgan/types.hpp"

namespace testsupport {

using amtgan::Tensor;

struct GradCheck {
  int coordinates = 0;
  int failures = 0;
  double worst = 0.0;  // largest |analytic - numeric| / (atol + rtol * |numeric|)
};

// Central differences (step h) on `samples` random coordinates of input `which`,
// compared with autograd. A coordinate passes when
// |analytic - numeric| <= atol + rtol * |numeric|. The default step is small
// because leaky-ReLU and L1 kinks within a wider step bias the quotient; in
// float64 the rounding error at 1e-6 stays near 1e-10.
inline GradCheck grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                            std::vector<Tensor> inputs, std::size_t which, int samples,
                            std::uint64_t seed, double h = 1e-6, double rtol = 1e-3,
                            double atol = 1e-5) {
  for (auto& t : inputs) t = t.detach().to(torch::kFloat64).clone();
  inputs[which].requires_grad_(true);
  const Tensor out = f(inputs);
  const Tensor analytic = torch::autograd::grad({out}, {inputs[which]})[0].contiguous();
  inputs[which] = inputs[which].detach();

  amtgan::Rng rng(seed);
  GradCheck r;
  const int64_t n = inputs[which].numel();
  for (int s = 0; s < samples; ++s) {
    const int64_t idx = rng.below(n);
    const auto eval_at = [&](double delta) {
      std::vector<Tensor> moved = inputs;
      moved[which] = inputs[which].clone();
      moved[which].view(-1)[idx] += delta;
      torch::NoGradGuard no_grad;
      return f(moved).item<double>();
    };
    const double numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
    const double a = analytic.view(-1)[idx].item<double>();
    const double ratio = std::abs(a - numeric) / (atol + rtol * std::abs(numeric));
    r.worst = std::max(r.worst, ratio);
    if (ratio > 1.0) ++r.failures;
    ++r.coordinates;
  }
  return r;
}

// Embedder stub: e(x) = W flatten(x), W fixed.
struct LinearEmbedder {
  Tensor w;  // [d, C*H*W]
  Tensor operator()(const Tensor& x) const { return torch::mm(x.flatten(1), w.t()); }
};

inline std::filesystem::path temp_dir(const std::string& tag) {
  const auto base = std::filesystem::temp_directory_path() /
                    ("amtgan_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(base);
  std::filesystem::create_directories(base);
  return base;
}

inline Tensor random_image(int64_t n, int64_t h, int64_t w, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand({n, 3, h, w}, gen) * 2.0 - 1.0;
}

}  // namespace testsupport
