#include "amtgan/networks.hpp"

#include "amtgan/digest.hpp"
#include "amtgan/error.hpp"
#include "amtgan/rng.hpp"

namespace amtgan::nets {

namespace F = torch::nn::functional;

namespace {

nn::Conv2d conv(int in, int out, int k, int stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding((k - 1) / 2));
}

Tensor lrelu(const Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

}  // namespace

GeneratorImpl::GeneratorImpl(GeneratorOptions options) : options_(options) {
  const int c = options.base_channels;
  src_in = register_module("src_in", conv(3, c, 3));
  src_down = register_module("src_down", nn::Conv2d(nn::Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)));
  ref_in = register_module("ref_in", conv(3, c, 3));
  ref_down = register_module("ref_down", nn::Conv2d(nn::Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)));
  fuse = register_module("fuse", conv(4 * c, 2 * c, 1));
  residual = register_module("residual", nn::ModuleList());
  for (int i = 0; i < 2 * options.residual_blocks; ++i) residual->push_back(conv(2 * c, 2 * c, 3));
  up = register_module("up", conv(2 * c, c, 3));
  merge = register_module("merge", conv(2 * c, c, 3));
  out = register_module("out", conv(c, 3, 3));
  seed_parameters(*this, options.seed);
}

Tensor GeneratorImpl::forward(const Tensor& source, const Tensor& reference) {
  if (source.sizes() != reference.sizes()) {
    throw ShapeError("generator: source and reference shapes differ");
  }
  if (source.dim() != 4 || source.size(1) != 3 || source.size(2) % 2 || source.size(3) % 2) {
    throw ShapeError("generator: expected [N, 3, H, W] with even H and W");
  }
  const Tensor s1 = lrelu(src_in->forward(source));
  const Tensor s2 = lrelu(src_down->forward(s1));
  const Tensor r2 = lrelu(ref_down->forward(lrelu(ref_in->forward(reference))));
  Tensor h = lrelu(fuse->forward(torch::cat({s2, r2}, 1)));
  for (std::size_t i = 0; i + 1 < residual->size(); i += 2) {
    const Tensor t = lrelu(residual[i]->as<nn::Conv2d>()->forward(h));
    h = h + residual[i + 1]->as<nn::Conv2d>()->forward(t);
  }
  Tensor u = F::interpolate(h, F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{source.size(2), source.size(3)})
                                   .mode(torch::kNearest));
  u = lrelu(up->forward(u));
  u = lrelu(merge->forward(torch::cat({u, s1}, 1)));
  // The head predicts a change in pre-activation space around the source, so a
  // small head starts G close to the identity on x.
  return torch::tanh(out->forward(u));
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorOptions options) {
  const int c = options.base_channels;
  convs = register_module("body", nn::ModuleList());
  convs->push_back(nn::Conv2d(nn::Conv2dOptions(3, c, 4).stride(2).padding(1)));
  convs->push_back(nn::Conv2d(nn::Conv2dOptions(c, 2 * c, 4).stride(2).padding(1)));
  convs->push_back(conv(2 * c, 1, 3));
  seed_parameters(*this, options.seed);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(options.seed ^ 0x5eedu);
  for (std::size_t i = 0; i < convs->size(); ++i) {
    const auto out = convs->ptr<nn::Conv2dImpl>(i)->weight.size(0);
    u_.push_back(register_buffer("u" + std::to_string(i), F::normalize(torch::randn({out}, gen),
                                                                       F::NormalizeFuncOptions().dim(0))));
  }
}

void DiscriminatorImpl::refresh_spectral_estimates() {
  torch::NoGradGuard no_grad;
  const auto unit = F::NormalizeFuncOptions().dim(0).eps(1e-12);
  for (std::size_t i = 0; i < convs->size(); ++i) {
    const Tensor w = convs->ptr<nn::Conv2dImpl>(i)->weight.flatten(1);
    const Tensor v = F::normalize(w.t().mv(u_[i]), unit);
    u_[i].copy_(F::normalize(w.mv(v), unit));
  }
}

Tensor DiscriminatorImpl::logits(const Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) throw ShapeError("discriminator: expected [N, 3, H, W]");
  const auto unit = F::NormalizeFuncOptions().dim(0).eps(1e-12);
  Tensor h = image;
  for (std::size_t i = 0; i < convs->size(); ++i) {
    auto& m = *convs->ptr<nn::Conv2dImpl>(i);
    const Tensor w = m.weight.flatten(1);
    const Tensor u = u_[i].to(w.dtype());
    const Tensor v = F::normalize(w.t().mv(u), unit).detach();
    const Tensor sigma = u.dot(w.mv(v));
    h = F::conv2d(h, m.weight / sigma, F::Conv2dFuncOptions()
                                           .bias(m.bias)
                                           .stride(m.options.stride())
                                           .padding(std::get<torch::ExpandingArray<2>>(m.options.padding())));
    if (i + 1 < convs->size()) h = lrelu(h);
  }
  return h;
}

DenseBlockImpl::DenseBlockImpl(int channels, int growth, int layers) {
  convs = register_module("convs", nn::ModuleList());
  for (int i = 0; i < layers; ++i) convs->push_back(conv(channels + i * growth, growth, 3));
  fuse = register_module("fuse", conv(channels + layers * growth, channels, 3));
}

Tensor DenseBlockImpl::forward(const Tensor& x) {
  std::vector<Tensor> feats{x};
  for (const auto& m : *convs) feats.push_back(lrelu(m->as<nn::Conv2d>()->forward(torch::cat(feats, 1))));
  return x + 0.2 * fuse->forward(torch::cat(feats, 1));
}

RRDBImpl::RRDBImpl(int channels, int growth) {
  d1 = register_module("d1", DenseBlock(channels, growth));
  d2 = register_module("d2", DenseBlock(channels, growth));
  d3 = register_module("d3", DenseBlock(channels, growth));
}

Tensor RRDBImpl::forward(const Tensor& x) { return x + 0.2 * d3(d2(d1(x))); }

RegularizerImpl::RegularizerImpl(RegularizerOptions options) {
  const int c = options.channels;
  enc1 = register_module("enc1", conv(3, c, 3));
  enc2 = register_module("enc2", nn::Conv2d(nn::Conv2dOptions(c, c, 4).stride(2).padding(1)));
  blocks = register_module("blocks", nn::Sequential());
  for (int i = 0; i < options.rrdb_blocks; ++i) blocks->push_back(RRDB(c, options.growth));
  dec = register_module("dec", conv(c, c, 3));
  head = register_module("head", conv(c, 3, 3));
  seed_parameters(*this, options.seed);
  torch::NoGradGuard no_grad;
  head->weight.zero_();
  head->bias.zero_();
}

Tensor RegularizerImpl::forward(const Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) throw ShapeError("regularizer: expected [N, 3, H, W]");
  if (image.size(2) % 2 != 0 || image.size(3) % 2 != 0) {
    throw ShapeError("regularizer: height and width must be even");
  }
  const Tensor e = lrelu(enc1->forward(image));
  Tensor h = enc2->forward(e);
  h = h + blocks->forward(h);
  h = F::interpolate(h, F::InterpolateFuncOptions()
                          .scale_factor(std::vector<double>{2.0, 2.0})
                          .mode(torch::kNearest));
  const Tensor residual = head->forward(lrelu(dec->forward(h) + e));
  const double limit = 1.0 - 1e-6;
  return torch::tanh(torch::atanh(image.clamp(-limit, limit)) + residual);
}

EmbedderArch EmbedderArch::draw(int model_id, std::uint64_t model_seed, int embedding_dim) {
  static constexpr int kWidths[] = {8, 12, 16, 20, 24};
  static constexpr int kStages[] = {2, 3, 4};
  static constexpr int kHidden[] = {96, 128, 160, 192};
  Rng r(model_seed * 0x2545f4914f6cdd1dULL + 17);
  EmbedderArch a;
  a.model_id = model_id;
  a.model_seed = model_seed;
  a.width = kWidths[r.below(5)];
  a.stages = kStages[r.below(3)];
  a.hidden = kHidden[r.below(4)];
  a.embedding_dim = embedding_dim;
  return a;
}

FrEmbedderImpl::FrEmbedderImpl(EmbedderArch arch) : arch_(arch) {
  trunk = register_module("trunk", nn::Sequential());
  int in = 3;
  for (int s = 0; s < arch.stages; ++s) {
    const int out = arch.width * (1 << std::min(s, 2));
    trunk->push_back(conv(in, out, 3));
    trunk->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    trunk->push_back(conv(out, out, 3));
    trunk->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    trunk->push_back(nn::AvgPool2d(nn::AvgPool2dOptions(2).ceil_mode(true)));
    in = out;
  }
  trunk->push_back(nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions({4, 4})));
  hidden = register_module("hidden", nn::Linear(in * 16, arch.hidden));
  project = register_module("project", nn::Linear(arch.hidden, arch.embedding_dim));
  seed_parameters(*this, arch.model_seed);
}

Tensor FrEmbedderImpl::features(const Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) throw ShapeError("embedder: expected [N, 3, H, W]");
  return lrelu(hidden->forward(trunk->forward(image).flatten(1)));
}

Tensor FrEmbedderImpl::forward(const Tensor& image) {
  const Tensor e = project->forward(features(image));
  return e / e.norm(2, {1}, true).clamp_min(1e-12);
}

int64_t FrEmbedderImpl::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

RandomPerceptualImpl::RandomPerceptualImpl(std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const int widths[] = {3, 8, 16, 32};
  for (int i = 0; i < 3; ++i) {
    auto layer = nn::Conv2d(nn::Conv2dOptions(widths[i], widths[i + 1], 3).stride(i == 0 ? 1 : 2).padding(1));
    torch::NoGradGuard no_grad;
    const double scale = std::sqrt(2.0 / (widths[i] * 9));
    layer->weight.copy_(torch::randn(layer->weight.sizes(), gen) * scale);
    layer->bias.copy_(torch::randn(layer->bias.sizes(), gen) * 0.1);
    layers_.push_back(register_module("layer" + std::to_string(i), layer));
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
}

Tensor RandomPerceptualImpl::distance(const Tensor& a, const Tensor& b) {
  if (a.sizes() != b.sizes()) throw ShapeError("perceptual distance: shape mismatch");
  Tensor fa = a;
  Tensor fb = b;
  Tensor total = torch::zeros({}, a.options());
  for (auto& layer : layers_) {
    fa = lrelu(layer->forward(fa));
    fb = lrelu(layer->forward(fb));
    const Tensor na = fa / (fa.norm(2, {1}, true) + 1e-10);
    const Tensor nb = fb / (fb.norm(2, {1}, true) + 1e-10);
    total = total + (na - nb).pow(2).sum(1).mean();
  }
  return total;
}

void seed_parameters(nn::Module& module, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard no_grad;
  for (auto& p : module.parameters()) {
    if (p.dim() < 2) {
      p.zero_();
      continue;
    }
    const double fan_in = static_cast<double>(p.numel() / p.size(0));
    const double bound = std::sqrt(6.0 / ((1.0 + 0.04) * fan_in));
    p.copy_(torch::rand(p.sizes(), gen, p.options()) * (2 * bound) - bound);
  }
}

PairFn as_pair_fn(Generator g) {
  return [g](const Tensor& x, const Tensor& y) mutable { return g->forward(x, y); };
}
ImageFn as_image_fn(Regularizer h) {
  return [h](const Tensor& x) mutable { return h->forward(x); };
}
ImageFn as_logit_fn(Discriminator d) {
  return [d](const Tensor& x) mutable { return d->logits(x); };
}
ImageFn as_embed_fn(FrEmbedder m) {
  return [m](const Tensor& x) mutable { return m->forward(x); };
}
DistanceFn as_distance_fn(RandomPerceptual p) {
  return [p](const Tensor& a, const Tensor& b) mutable { return p->distance(a, b); };
}

Tensor flat_parameters(const nn::Module& module) {
  std::vector<Tensor> flat;
  for (const auto& p : module.parameters()) flat.push_back(p.detach().flatten());
  return flat.empty() ? torch::empty({0}) : torch::cat(flat).clone();
}

std::string parameter_digest(const nn::Module& module) {
  Sha256 sha;
  for (const auto& np : module.named_parameters()) {
    const Tensor p = np.value().detach().contiguous();
    sha.update(np.key());
    sha.update({static_cast<const unsigned char*>(p.data_ptr()),
                static_cast<std::size_t>(p.numel() * p.element_size())});
  }
  return sha.hex();
}

}  // namespace amtgan::nets
