#include "amtgan/losses.hpp"

#include <cmath>
#include <string>

#include "amtgan/error.hpp"

namespace amtgan::losses {

namespace F = torch::nn::functional;

namespace {

// -mean(log sigmoid(l)) = -mean(log D)
Tensor neg_log_real(const Tensor& logits) { return -F::logsigmoid(logits).mean(); }
// -mean(log(1 - sigmoid(l))) = -mean(log sigmoid(-l))
Tensor neg_log_fake(const Tensor& logits) { return -F::logsigmoid(-logits).mean(); }

Tensor require_finite(Tensor loss, const char* name) {
  if (!std::isfinite(loss.item<double>())) {
    throw DivergenceError(std::string(name) + " is not finite");
  }
  return loss;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw ShapeError(std::string(what) + ": shape mismatch");
}

}  // namespace

Tensor gan_loss_D(const ImageFn& d_x, const ImageFn& d_y, const Tensor& x, const Tensor& y,
                  const Tensor& gxy, const Tensor& gyx) {
  const Tensor loss = neg_log_real(d_x(x)) + neg_log_fake(d_x(gyx.detach())) +
                      neg_log_real(d_y(y)) + neg_log_fake(d_y(gxy.detach()));
  return require_finite(loss, "gan_loss_D");
}

Tensor gan_loss_G(const ImageFn& d_x, const ImageFn& d_y, const Tensor& gxy, const Tensor& gyx) {
  return require_finite(neg_log_real(d_x(gyx)) + neg_log_real(d_y(gxy)), "gan_loss_G");
}

Tensor gan_loss_H(const ImageFn& d_x, const ImageFn& d_y, const ImageFn& h, const Tensor& gxy,
                  const Tensor& gyx) {
  const Tensor loss = neg_log_real(d_x(h(gyx.detach()))) + neg_log_real(d_y(h(gxy.detach())));
  return require_finite(loss, "gan_loss_H");
}

Tensor reg_cycle_loss(const PairFn& g, const ImageFn& h, const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "reg_cycle_loss");
  return reg_cycle_loss(g, h, x, y, g(x, y), g(y, x));
}

Tensor reg_cycle_loss(const PairFn& g, const ImageFn& h, const Tensor& x, const Tensor& y,
                      const Tensor& gxy, const Tensor& gyx) {
  const Tensor back_x = h(g(h(gxy), x));
  const Tensor back_y = h(g(h(gyx), y));
  return (back_x - x).abs().mean() + (back_y - y).abs().mean();
}

Tensor cosine_distance(const Tensor& target, const Tensor& embeddings) {
  const Tensor t = target.expand_as(embeddings);
  return (1.0 - F::cosine_similarity(t, embeddings, F::CosineSimilarityFuncOptions().dim(1)))
      .mean();
}

Tensor adv_loss_G(std::span<const ImageFn> models, std::span<const Tensor> target_embeddings,
                  const Tensor& gxy, const Tensor& gyx, const diversity::DiversityConfig& config,
                  Rng& rng) {
  if (models.empty()) throw DomainError("adv_loss_G needs at least one model");
  if (models.size() != target_embeddings.size()) {
    throw DomainError("adv_loss_G: one target embedding per model required");
  }
  const double scale = 1.0 / (2.0 * static_cast<double>(models.size()));
  Tensor total = torch::zeros({}, gxy.options());
  for (std::size_t k = 0; k < models.size(); ++k) {
    const Tensor& z = target_embeddings[k];
    total = total + cosine_distance(z, models[k](diversity::transform(gxy, config, rng)));
    total = total + cosine_distance(z, models[k](diversity::transform(gyx, config, rng)));
  }
  return total * scale;
}

Tensor adv_loss_H(std::span<const ImageFn> models, const Tensor& x, const Tensor& y,
                  const Tensor& h_gxy, const Tensor& h_gyx) {
  if (models.empty()) throw DomainError("adv_loss_H needs at least one model");
  const double scale = 1.0 / (2.0 * static_cast<double>(models.size()));
  Tensor total = torch::zeros({}, h_gxy.options());
  for (const auto& m : models) {
    Tensor ex;
    Tensor ey;
    {
      torch::NoGradGuard no_grad;
      ex = m(x);
      ey = m(y);
    }
    total = total + cosine_distance(ex, m(h_gxy)) + cosine_distance(ey, m(h_gyx));
  }
  return total * scale;
}

Tensor makeup_loss(const Tensor& output, const Tensor& hm_target) {
  require_same_shape(output, hm_target, "makeup_loss");
  // norm() has a zero subgradient at the origin, unlike sqrt(mse).
  return (output - hm_target.detach()).norm() / std::sqrt(static_cast<double>(output.numel()));
}

Tensor idt_loss(const PairFn& g, const ImageFn& h, const Tensor& x, const Tensor& y,
                const DistanceFn& perceptual) {
  return idt_loss_from(h(g(x, x)), x, h(g(y, y)), y, perceptual);
}

Tensor idt_loss_from(const Tensor& rx, const Tensor& x, const Tensor& ry, const Tensor& y,
                     const DistanceFn& perceptual) {
  require_same_shape(rx, x, "idt_loss");
  require_same_shape(ry, y, "idt_loss");
  return (rx - x).abs().mean() + perceptual(rx, x) + (ry - y).abs().mean() + perceptual(ry, y);
}

void LossWeights::validate() const {
  for (double w : {gan, reg, adv, make, idt}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and >= 0");
  }
}

LossReport totals(const LossTerms& t, const LossWeights& w) {
  w.validate();
  LossReport r;
  r.terms = t;
  r.d_total = w.gan * t.d_gan;
  r.g_total = w.gan * t.g_gan + w.reg * t.g_reg + w.adv * t.g_adv + w.make * t.g_make + w.idt * t.idt;
  r.h_total = w.gan * t.h_gan + w.adv * t.h_adv + w.make * t.h_make + w.idt * t.idt;
  return r;
}

}  // namespace amtgan::losses
