#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amtgan/types.hpp"

namespace amtgan::nets {

namespace nn = torch::nn;

struct GeneratorOptions {
  int base_channels = 16;
  int residual_blocks = 2;
  std::uint64_t seed = 1;
};

// Makeup generator G(x, y): two strided encoders (source, reference), fused by
// channel concatenation, a residual bottleneck and an upsampling decoder with a
// skip from the source encoder; tanh output in (-1, 1).
class GeneratorImpl : public nn::Module {
 public:
  explicit GeneratorImpl(GeneratorOptions options = {});
  Tensor forward(const Tensor& source, const Tensor& reference);

  const GeneratorOptions& options() const { return options_; }

 private:
  GeneratorOptions options_;
  nn::Conv2d src_in{nullptr}, src_down{nullptr};
  nn::Conv2d ref_in{nullptr}, ref_down{nullptr};
  nn::Conv2d fuse{nullptr};
  nn::ModuleList residual{nullptr};
  nn::Conv2d up{nullptr}, merge{nullptr}, out{nullptr};
};
TORCH_MODULE(Generator);

struct DiscriminatorOptions {
  int base_channels = 16;
  std::uint64_t seed = 2;
};

// Spectrally normalized patch discriminator. `logits` is the pre-sigmoid
// realness map; `forward` returns sigmoid(logits), strictly inside (0, 1) for
// finite logits. The singular-vector estimates are buffers, advanced only by
// refresh_spectral_estimates(), so logits are a pure function of the state.
class DiscriminatorImpl : public nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorOptions options = {});
  Tensor logits(const Tensor& image);
  Tensor forward(const Tensor& image) { return torch::sigmoid(logits(image)); }
  // One power iteration per layer.
  void refresh_spectral_estimates();

 private:
  nn::ModuleList convs{nullptr};
  std::vector<Tensor> u_;
};
TORCH_MODULE(Discriminator);

// Dense block of the RRDB: each conv sees the concatenation of all earlier
// features; the fused output is added back with a 0.2 residual scale.
class DenseBlockImpl : public nn::Module {
 public:
  DenseBlockImpl(int channels, int growth, int layers = 4);
  Tensor forward(const Tensor& x);

 private:
  nn::ModuleList convs{nullptr};
  nn::Conv2d fuse{nullptr};
};
TORCH_MODULE(DenseBlock);

class RRDBImpl : public nn::Module {
 public:
  RRDBImpl(int channels, int growth);
  Tensor forward(const Tensor& x);

 private:
  DenseBlock d1{nullptr}, d2{nullptr}, d3{nullptr};
};
TORCH_MODULE(RRDB);

struct RegularizerOptions {
  int channels = 16;
  int growth = 8;
  int rrdb_blocks = 2;
  std::uint64_t seed = 3;
};

// Purifier H: strided encoder, R RRDB blocks at half resolution, upsampling
// decoder with a full-resolution skip. The decoder head is zero-initialized
// and added in pre-tanh space, so a fresh H is the identity map up to clamping
// at +-(1 - 1e-6).
class RegularizerImpl : public nn::Module {
 public:
  explicit RegularizerImpl(RegularizerOptions options = {});
  Tensor forward(const Tensor& image);

 private:
  nn::Conv2d enc1{nullptr}, enc2{nullptr};
  nn::Sequential blocks{nullptr};
  nn::Conv2d dec{nullptr}, head{nullptr};
};
TORCH_MODULE(Regularizer);

// Architecture of a toy face-recognition embedder, drawn from its model seed so
// that ensemble members differ in width and depth.
struct EmbedderArch {
  int model_id = 0;
  std::uint64_t model_seed = 0;
  int width = 16;
  int stages = 3;
  int hidden = 128;
  int embedding_dim = 64;

  static EmbedderArch draw(int model_id, std::uint64_t model_seed, int embedding_dim = 64);
};

class FrEmbedderImpl : public nn::Module {
 public:
  explicit FrEmbedderImpl(EmbedderArch arch);

  // Penultimate activations [N, hidden] (also used as FID features).
  Tensor features(const Tensor& image);
  // Unit-norm embedding [N, d].
  Tensor forward(const Tensor& image);

  const EmbedderArch& arch() const { return arch_; }
  int64_t parameter_count() const;

 private:
  EmbedderArch arch_;
  nn::Sequential trunk{nullptr};
  nn::Linear hidden{nullptr}, project{nullptr};
};
TORCH_MODULE(FrEmbedder);

// Frozen random convolutional pyramid used as the perceptual distance: per
// layer, channel vectors are unit-normalized and the squared difference is
// averaged spatially; layers are summed. Weights come from a fixed seed.
class RandomPerceptualImpl : public nn::Module {
 public:
  explicit RandomPerceptualImpl(std::uint64_t seed = 20240601);
  Tensor distance(const Tensor& a, const Tensor& b);

 private:
  std::vector<nn::Conv2d> layers_;
};
TORCH_MODULE(RandomPerceptual);

// Re-draws every parameter from a local generator: Kaiming-uniform weights for
// leaky-ReLU(0.2), zero biases. Networks call this from their constructors so
// initialization never depends on torch's global generator.
void seed_parameters(nn::Module& module, std::uint64_t seed);

// Adapters to the loss-function signatures.
PairFn as_pair_fn(Generator g);
ImageFn as_image_fn(Regularizer h);
ImageFn as_logit_fn(Discriminator d);
ImageFn as_embed_fn(FrEmbedder m);
DistanceFn as_distance_fn(RandomPerceptual p);

// Flattened copy of all parameters, for update-isolation checks and hashing.
Tensor flat_parameters(const nn::Module& module);

// Stable digest of a module's parameters (hex), for change detection.
std::string parameter_digest(const nn::Module& module);

}  // namespace amtgan::nets
