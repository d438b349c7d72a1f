#pragma once

#include <span>
#include <vector>

#include "amtgan/diversity.hpp"
#include "amtgan/rng.hpp"
#include "amtgan/types.hpp"

namespace amtgan::losses {

// Discriminators are passed as logit maps; D(x) = sigmoid(logits(x)). The log
// terms are evaluated with log-sigmoid so they stay finite when D saturates.

// -log D_X(x) - log(1 - D_X(gyx)) - log D_Y(y) - log(1 - D_Y(gxy)), each term
// averaged over batch and map. Fakes must already be detached from G.
Tensor gan_loss_D(const ImageFn& d_x, const ImageFn& d_y, const Tensor& x, const Tensor& y,
                  const Tensor& gxy, const Tensor& gyx);

// -log D_X(gyx) - log D_Y(gxy).
Tensor gan_loss_G(const ImageFn& d_x, const ImageFn& d_y, const Tensor& gxy, const Tensor& gyx);

// -log D_X(H(gyx)) - log D_Y(H(gxy)); gxy / gyx are detached here so only H
// receives gradient through this term.
Tensor gan_loss_H(const ImageFn& d_x, const ImageFn& d_y, const ImageFn& h, const Tensor& gxy,
                  const Tensor& gyx);

// |H(G(H(G(x,y)), x)) - x|_1 + |H(G(H(G(y,x)), y)) - y|_1 with per-pixel mean L1.
Tensor reg_cycle_loss(const PairFn& g, const ImageFn& h, const Tensor& x, const Tensor& y);

// Same, reusing already computed forward fakes gxy = G(x,y), gyx = G(y,x).
Tensor reg_cycle_loss(const PairFn& g, const ImageFn& h, const Tensor& x, const Tensor& y,
                      const Tensor& gxy, const Tensor& gyx);

// Mean over the batch of 1 - cos(target, embedding), target broadcast from [1, d].
Tensor cosine_distance(const Tensor& target, const Tensor& embeddings);

// (1/2K) sum_k [1 - cos(M_k(z), M_k(T(gxy)))] + (1/2K) sum_k [1 - cos(M_k(z), M_k(T(gyx)))].
// T is drawn independently for every (model, direction) term.
Tensor adv_loss_G(std::span<const ImageFn> models, std::span<const Tensor> target_embeddings,
                  const Tensor& gxy, const Tensor& gyx, const diversity::DiversityConfig& config,
                  Rng& rng);

// (1/2K) sum_k [1 - cos(M_k(x), M_k(h_gxy))] + (1/2K) sum_k [1 - cos(M_k(y), M_k(h_gyx))].
// No input diversity; the clean embeddings of x and y are constants.
Tensor adv_loss_H(std::span<const ImageFn> models, const Tensor& x, const Tensor& y,
                  const Tensor& h_gxy, const Tensor& h_gyx);

// Root-mean-square distance between an output and its (detached) HM target.
Tensor makeup_loss(const Tensor& output, const Tensor& hm_target);

// |H(G(x,x)) - x|_1 + P(H(G(x,x)), x) + |H(G(y,y)) - y|_1 + P(H(G(y,y)), y).
Tensor idt_loss(const PairFn& g, const ImageFn& h, const Tensor& x, const Tensor& y,
                const DistanceFn& perceptual);

// Same from precomputed self-reconstructions rx = H(G(x,x)), ry = H(G(y,y)).
Tensor idt_loss_from(const Tensor& rx, const Tensor& x, const Tensor& ry, const Tensor& y,
                     const DistanceFn& perceptual);

struct LossWeights {
  double gan = 10.0;
  double reg = 10.0;
  double adv = 5.0;
  double make = 2.0;
  double idt = 5.0;

  // Throws ConfigError on negative or non-finite weights.
  void validate() const;
};

struct LossTerms {
  double d_gan = 0.0;
  double g_gan = 0.0;
  double g_reg = 0.0;
  double g_adv = 0.0;
  double g_make = 0.0;
  double idt = 0.0;
  double h_gan = 0.0;
  double h_adv = 0.0;
  double h_make = 0.0;
};

struct LossReport {
  LossTerms terms;
  double d_total = 0.0;
  double g_total = 0.0;
  double h_total = 0.0;
};

// L_D = w.gan*d_gan
// L_G = w.gan*g_gan + w.reg*g_reg + w.adv*g_adv + w.make*g_make + w.idt*idt
// L_H = w.gan*h_gan + w.adv*h_adv + w.make*h_make + w.idt*idt
LossReport totals(const LossTerms& terms, const LossWeights& weights);

}  // namespace amtgan::losses
