#pragma once

#include <functional>

#include <torch/torch.h>

namespace amtgan {

// Image batches are float tensors laid out [N, 3, H, W] with values in [-1, 1].
using Tensor = torch::Tensor;

// Single-image network: G's regularizer H, discriminator logits, embedders.
using ImageFn = std::function<Tensor(const Tensor&)>;

// Two-image network: the makeup generator G(source, reference).
using PairFn = std::function<Tensor(const Tensor&, const Tensor&)>;

// Perceptual distance between two batches, reduced to a scalar.
using DistanceFn = std::function<Tensor(const Tensor&, const Tensor&)>;

}  // namespace amtgan
