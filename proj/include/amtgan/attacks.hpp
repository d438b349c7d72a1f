#pragma once

#include <span>
#include <string>

#include "amtgan/diversity.hpp"
#include "amtgan/rng.hpp"
#include "amtgan/types.hpp"

namespace amtgan::attacks {

// Budgets are in [-1, 1] pixel units (8-bit budget e maps to 2e/255).
struct AttackConfig {
  double epsilon = 0.1;
  double step_size = 0.01;
  int iterations = 40;
  double momentum = 1.0;
  int kernel_size = 5;
  diversity::DiversityConfig diversity;

  // Throws ConfigError.
  void validate() const;
};

double epsilon_from_8bit(double levels);

// Mean over models of the batch-mean cosine distance to each model's target embedding.
Tensor ensemble_target_loss(std::span<const ImageFn> models, std::span<const Tensor> targets,
                            const Tensor& images);

// Clamp into the L-inf ball of radius epsilon around x, then into [-1, 1].
Tensor project(const Tensor& candidate, const Tensor& x, double epsilon);

// Iterated x <- project(x - alpha * sign(grad)).
Tensor pgd_targeted(const Tensor& x, std::span<const Tensor> targets,
                    std::span<const ImageFn> models, const AttackConfig& config);

// g <- mu * g + grad / |grad|_1 (per image), x <- project(x - alpha * sign(g)).
Tensor mifgsm_targeted(const Tensor& x, std::span<const Tensor> targets,
                       std::span<const ImageFn> models, const AttackConfig& config);

// MI-FGSM with input diversity before every forward pass and the gradient
// smoothed by a normalized Gaussian kernel before the momentum update.
Tensor tidim_targeted(const Tensor& x, std::span<const Tensor> targets,
                      std::span<const ImageFn> models, const AttackConfig& config, Rng& rng);

// [k, k] kernel from a standard normal density sampled on linspace(-3, 3, k), sum 1.
Tensor gaussian_kernel(int size);

// Depthwise convolution of a [N, C, H, W] gradient with gaussian_kernel(size), zero padded.
Tensor smooth_gradient(const Tensor& grad, int size);

enum class Method { kNone, kPgd, kMifgsm, kTidim };
Method parse_method(const std::string& name);  // throws ConfigError
std::string method_name(Method method);

Tensor run(Method method, const Tensor& x, std::span<const Tensor> targets,
           std::span<const ImageFn> models, const AttackConfig& config, Rng& rng);

}  // namespace amtgan::attacks
