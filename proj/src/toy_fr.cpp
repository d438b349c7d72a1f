#include "amtgan/toy_fr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "amtgan/error.hpp"
#include "amtgan/rng.hpp"

namespace amtgan::nets {

LabeledImages LabeledImages::from_faces(const data::FaceSet& faces) {
  std::vector<int64_t> labels;
  labels.reserve(faces.size());
  for (const auto& f : faces) labels.push_back(f.image.identity_id);
  return {data::stack_pixels(faces), torch::tensor(labels, torch::kInt64)};
}

VerificationStats verification_at_eer(const Tensor& embeddings, const Tensor& labels) {
  const Tensor e = embeddings.detach().to(torch::kFloat64);
  const Tensor sims = torch::mm(e, e.t());
  const auto n = e.size(0);
  auto sa = sims.accessor<double, 2>();
  const Tensor lab = labels.to(torch::kInt64).contiguous();
  auto la = lab.accessor<int64_t, 1>();
  std::vector<double> genuine;
  std::vector<double> impostor;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = i + 1; j < n; ++j) {
      (la[i] == la[j] ? genuine : impostor).push_back(sa[i][j]);
    }
  }
  if (genuine.empty() || impostor.empty()) {
    throw DomainError("verification_at_eer needs both genuine and impostor pairs");
  }
  std::sort(genuine.begin(), genuine.end());
  std::sort(impostor.begin(), impostor.end());

  // Sweep candidate thresholds (every observed score); accept when sim >= t.
  std::vector<double> candidates(genuine);
  candidates.insert(candidates.end(), impostor.begin(), impostor.end());
  std::sort(candidates.begin(), candidates.end());
  VerificationStats best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (double t : candidates) {
    const double frr =
        static_cast<double>(std::lower_bound(genuine.begin(), genuine.end(), t) - genuine.begin()) /
        static_cast<double>(genuine.size());
    const double far = static_cast<double>(impostor.end() -
                                           std::lower_bound(impostor.begin(), impostor.end(), t)) /
                       static_cast<double>(impostor.size());
    const double gap = std::abs(far - frr);
    if (gap < best_gap) {
      best_gap = gap;
      best.threshold = t;
      best.far = far;
      best.frr = frr;
    }
  }
  best.accuracy = 1.0 - 0.5 * (best.far + best.frr);
  best.genuine_pairs = static_cast<std::int64_t>(genuine.size());
  best.impostor_pairs = static_cast<std::int64_t>(impostor.size());
  return best;
}

namespace {

Tensor embed_all(FrEmbedder& model, const Tensor& images) {
  torch::NoGradGuard no_grad;
  std::vector<Tensor> out;
  for (int64_t i = 0; i < images.size(0); i += 128) {
    out.push_back(model->forward(images.slice(0, i, std::min(images.size(0), i + 128))));
  }
  return torch::cat(out);
}

}  // namespace

FrEmbedder train_toy_fr(const LabeledImages& train, const LabeledImages& heldout, int model_id,
                        std::uint64_t model_seed, const FrTrainOptions& options,
                        FrTrainReport* report) {
  const auto distinct = std::get<0>(torch::_unique(train.labels));
  if (distinct.size(0) < 8) {
    throw DomainError("train_toy_fr needs at least 8 identities, got " +
                      std::to_string(distinct.size(0)));
  }
  // Map arbitrary identity labels to contiguous class indices.
  const auto sorted_ids = std::get<0>(distinct.sort());
  const Tensor classes = torch::searchsorted(sorted_ids, train.labels);
  const int64_t num_classes = sorted_ids.size(0);

  FrEmbedder model(EmbedderArch::draw(model_id, model_seed));
  auto gen = at::make_generator<at::CPUGeneratorImpl>(model_seed ^ options.seed);
  Tensor class_weights =
      torch::randn({num_classes, model->arch().embedding_dim}, gen).set_requires_grad(true);
  std::vector<Tensor> params = model->parameters();
  params.push_back(class_weights);
  torch::optim::Adam opt(params, torch::optim::AdamOptions(options.learning_rate));

  Rng rng(options.seed * 31 + model_seed);
  const int64_t n = train.images.size(0);
  std::vector<int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  VerificationStats stats;
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    model->train();
    for (int64_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (int64_t start = 0; start < n; start += options.batch_size) {
      const int64_t end = std::min(n, start + options.batch_size);
      const Tensor idx =
          torch::tensor(std::vector<int64_t>(order.begin() + start, order.begin() + end));
      Tensor x = train.images.index_select(0, idx);
      if (options.noise_sigma > 0) {
        x = (x + options.noise_sigma * torch::randn(x.sizes(), gen)).clamp(-1, 1);
      }
      const Tensor y = classes.index_select(0, idx);
      const Tensor emb = model->forward(x);
      const Tensor w = class_weights / class_weights.norm(2, {1}, true);
      const Tensor cosine = torch::mm(emb, w.t());
      const Tensor onehot = torch::one_hot(y, num_classes).to(cosine.dtype());
      const Tensor logits = options.scale * (cosine - options.margin * onehot);
      const Tensor loss = torch::nn::functional::cross_entropy(logits, y);
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
    model->eval();
    stats = verification_at_eer(embed_all(model, heldout.images), heldout.labels);
    if (epoch >= options.min_epochs && stats.accuracy >= options.target_accuracy) {
      if (report) *report = {stats, epoch};
      return model;
    }
  }
  std::ostringstream msg;
  msg << "toy FR model " << model_id << " (seed " << model_seed << ") reached held-out accuracy "
      << stats.accuracy << " (FAR " << stats.far << ", FRR " << stats.frr << ") after "
      << options.max_epochs << " epochs; target " << options.target_accuracy;
  throw DomainError(msg.str());
}

}  // namespace amtgan::nets
