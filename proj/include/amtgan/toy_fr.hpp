#pragma once

#include <cstdint>

#include "amtgan/data.hpp"
#include "amtgan/networks.hpp"

namespace amtgan::nets {

// Images [N, 3, H, W] with integer identity labels [N].
struct LabeledImages {
  Tensor images;
  Tensor labels;

  static LabeledImages from_faces(const data::FaceSet& faces);
};

struct VerificationStats {
  double threshold = 0.0;  // cosine threshold where FAR ~= FRR
  double far = 0.0;
  double frr = 0.0;
  double accuracy = 0.0;   // 1 - (FAR + FRR) / 2 at the threshold
  std::int64_t genuine_pairs = 0;
  std::int64_t impostor_pairs = 0;
};

// Verification over all pairs of a labelled embedding set, at the EER threshold.
VerificationStats verification_at_eer(const Tensor& embeddings, const Tensor& labels);

struct FrTrainOptions {
  int min_epochs = 8;
  int max_epochs = 60;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double margin = 0.25;  // additive cosine margin
  double scale = 16.0;   // logit scale
  double noise_sigma = 0.03;  // augmentation
  double target_accuracy = 0.85;
  std::uint64_t seed = 7;
};

struct FrTrainReport {
  VerificationStats heldout;
  int epochs = 0;
};

// Trains a toy embedder with an additive-cosine-margin identity objective until
// held-out verification accuracy at its own EER threshold reaches the target.
// Throws DomainError with diagnostics if the budget runs out, or if the data has
// fewer than 8 identities.
FrEmbedder train_toy_fr(const LabeledImages& train, const LabeledImages& heldout, int model_id,
                        std::uint64_t model_seed, const FrTrainOptions& options = {},
                        FrTrainReport* report = nullptr);

}  // namespace amtgan::nets
