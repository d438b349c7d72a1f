#include "amtgan/attacks.hpp"

#include <cmath>
#include <functional>

#include "amtgan/error.hpp"
#include "amtgan/losses.hpp"

namespace amtgan::attacks {

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("attack.epsilon must be >= 0");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("attack.step_size must be > 0");
  if (iterations < 1) throw ConfigError("attack.iterations must be >= 1");
  if (!(momentum >= 0.0) || !std::isfinite(momentum)) throw ConfigError("attack.momentum must be >= 0");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("attack.kernel_size must be odd");
  diversity.validate();
}

double epsilon_from_8bit(double levels) { return 2.0 * levels / 255.0; }

Tensor ensemble_target_loss(std::span<const ImageFn> models, std::span<const Tensor> targets,
                            const Tensor& images) {
  if (models.empty() || models.size() != targets.size()) {
    throw DomainError("attack needs one target embedding per model");
  }
  Tensor total = torch::zeros({}, images.options());
  for (std::size_t k = 0; k < models.size(); ++k) {
    total = total + losses::cosine_distance(targets[k], models[k](images));
  }
  return total / static_cast<double>(models.size());
}

Tensor project(const Tensor& candidate, const Tensor& x, double epsilon) {
  return torch::min(torch::max(candidate, x - epsilon), x + epsilon).clamp(-1.0, 1.0);
}

namespace {

using Forward = std::function<Tensor(const Tensor&)>;

Tensor loss_gradient(std::span<const ImageFn> models, std::span<const Tensor> targets,
                     const Tensor& adv, const Forward& before) {
  const Tensor leaf = adv.detach().requires_grad_(true);
  const Tensor loss = ensemble_target_loss(models, targets, before(leaf));
  return torch::autograd::grad({loss}, {leaf})[0];
}

Tensor iterate(const Tensor& x, std::span<const Tensor> targets, std::span<const ImageFn> models,
               const AttackConfig& config, bool use_momentum, const Forward& before,
               int kernel_size) {
  config.validate();
  const Tensor clean = x.detach();
  Tensor adv = clean.clone();
  Tensor g = torch::zeros_like(clean);
  for (int it = 0; it < config.iterations; ++it) {
    Tensor grad = loss_gradient(models, targets, adv, before);
    torch::NoGradGuard no_grad;
    Tensor direction = grad;
    if (use_momentum) {
      if (kernel_size > 1) grad = smooth_gradient(grad, kernel_size);
      const Tensor l1 = grad.abs().sum({1, 2, 3}, true).clamp_min(1e-12);
      g = config.momentum * g + grad / l1;
      direction = g;
    }
    adv = project(adv - config.step_size * direction.sign(), clean, config.epsilon);
  }
  return adv;
}

const Forward kIdentity = [](const Tensor& t) { return t; };

}  // namespace

Tensor pgd_targeted(const Tensor& x, std::span<const Tensor> targets,
                    std::span<const ImageFn> models, const AttackConfig& config) {
  return iterate(x, targets, models, config, false, kIdentity, 1);
}

Tensor mifgsm_targeted(const Tensor& x, std::span<const Tensor> targets,
                       std::span<const ImageFn> models, const AttackConfig& config) {
  return iterate(x, targets, models, config, true, kIdentity, 1);
}

Tensor tidim_targeted(const Tensor& x, std::span<const Tensor> targets,
                      std::span<const ImageFn> models, const AttackConfig& config, Rng& rng) {
  const auto diverse = [&](const Tensor& t) { return diversity::transform(t, config.diversity, rng); };
  return iterate(x, targets, models, config, true, diverse, config.kernel_size);
}

Tensor gaussian_kernel(int size) {
  if (size < 1 || size % 2 == 0) throw ConfigError("kernel size must be odd and positive");
  const Tensor t = torch::linspace(-3.0, 3.0, size, torch::kFloat64);
  const Tensor pdf = torch::exp(-0.5 * t * t);
  const Tensor k = torch::outer(pdf, pdf);
  return k / k.sum();
}

Tensor smooth_gradient(const Tensor& grad, int size) {
  const int64_t c = grad.size(1);
  const Tensor k = gaussian_kernel(size).to(grad.dtype()).expand({c, 1, size, size}).contiguous();
  return torch::nn::functional::conv2d(
      grad, k, torch::nn::functional::Conv2dFuncOptions().padding(size / 2).groups(c));
}

Method parse_method(const std::string& name) {
  if (name == "none") return Method::kNone;
  if (name == "pgd") return Method::kPgd;
  if (name == "mifgsm") return Method::kMifgsm;
  if (name == "tidim") return Method::kTidim;
  throw ConfigError("unknown attack '" + name + "' (expected none, pgd, mifgsm or tidim)");
}

std::string method_name(Method method) {
  switch (method) {
    case Method::kNone: return "none";
    case Method::kPgd: return "pgd";
    case Method::kMifgsm: return "mifgsm";
    case Method::kTidim: return "tidim";
  }
  return "none";
}

Tensor run(Method method, const Tensor& x, std::span<const Tensor> targets,
           std::span<const ImageFn> models, const AttackConfig& config, Rng& rng) {
  switch (method) {
    case Method::kNone: return x.detach().clone();
    case Method::kPgd: return pgd_targeted(x, targets, models, config);
    case Method::kMifgsm: return mifgsm_targeted(x, targets, models, config);
    case Method::kTidim: return tidim_targeted(x, targets, models, config, rng);
  }
  return x.detach().clone();
}

}  // namespace amtgan::attacks
