#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "amtgan/config.hpp"
#include "amtgan/data.hpp"
#include "amtgan/evaluation.hpp"
#include "amtgan/networks.hpp"
#include "amtgan/toy_fr.hpp"
#include "amtgan/training.hpp"

// Assembly of the experiment from a RunConfig: FR zoo, image sets, threshold
// calibration, protection with a trained generator, and evaluation.
namespace amtgan::pipeline {

struct ZooMember {
  int model_id = 0;
  nets::FrEmbedder model{nullptr};
  nets::FrTrainReport report;
};
using Zoo = std::vector<ZooMember>;

// Disables gradients on a module's parameters and switches it to eval mode.
void freeze(torch::nn::Module& module);

// Trains fr.models embedders on the fr.train identities (both style domains).
Zoo train_zoo(const config::RunConfig& rc, bool verbose = true);
std::filesystem::path zoo_model_path(const std::filesystem::path& dir, int model_id);
void save_zoo(const Zoo& zoo, const std::filesystem::path& dir);
// Throws ConfigError if a model file is missing; IntegrityError if corrupt.
Zoo load_zoo(const std::filesystem::path& dir, int models);
bool zoo_complete(const std::filesystem::path& dir, int models);

const ZooMember& member(const Zoo& zoo, int model_id);
std::vector<ImageFn> embed_fns(const Zoo& zoo, const std::vector<int>& ids);

struct ImageSet {
  data::FaceSet faces;
  std::vector<std::string> names;
};

// Directory-backed when the corresponding data.*_dir is set, synthetic otherwise.
ImageSet training_sources(const config::RunConfig& rc);
ImageSet training_references(const config::RunConfig& rc);
ImageSet test_sources(const config::RunConfig& rc);
ImageSet test_references(const config::RunConfig& rc);
data::FaceImage target_face(const config::RunConfig& rc);

// Negative-pair cosine similarities under one model for an identity range
// (both style domains), subsampled to at most max_pairs.
std::vector<double> calibration_negatives(const nets::FrEmbedder& model, const config::IdentityRange& range,
                                          int resolution, std::size_t max_pairs, std::uint64_t seed);
std::vector<eval::VerificationThreshold> calibrate(const Zoo& zoo, const config::RunConfig& rc);

training::TrainRequest make_train_request(const config::RunConfig& rc, const Zoo& zoo);

// Rebuilds G from a checkpoint (network options taken from the stored config).
nets::Generator generator_from(const training::Checkpoint& checkpoint);

// G(x_i, y_{i mod M}) for every source, batched, no gradients.
Tensor protect(nets::Generator& g, const Tensor& sources, const Tensor& references);

// Evaluates already protected images against every zoo model.
eval::MetricsReport evaluate_images(const config::RunConfig& rc, const Zoo& zoo,
                                    const std::vector<eval::VerificationThreshold>& thresholds,
                                    const ImageSet& clean, const Tensor& protected_images,
                                    const std::string& method);

}  // namespace amtgan::pipeline
