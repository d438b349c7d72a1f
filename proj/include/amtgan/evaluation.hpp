#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "amtgan/rng.hpp"
#include "amtgan/types.hpp"

namespace amtgan::eval {

struct VerificationThreshold {
  int model_id = 0;
  double tau = 0.0;
  double far_target = 0.01;
  double far_achieved = 0.0;
  std::int64_t pairs = 0;
};

inline constexpr std::int64_t kMinCalibrationPairs = 1000;

// Empirical quantile: with scores sorted descending and m = floor(far * N),
// tau = s[m-1] (ties at tau are accepted); m = 0 gives the next double above
// the largest score. Throws DomainError with fewer than kMinCalibrationPairs.
VerificationThreshold calibrate_threshold(int model_id, std::span<const double> negative_similarities,
                                          double far_target);

// Fraction of scores >= tau.
double acceptance_rate(std::span<const double> similarities, double tau);

// Cosine similarities of all different-label pairs of unit-norm embeddings [N, d].
std::vector<double> negative_pair_similarities(const Tensor& embeddings, const Tensor& labels);

// Uniform subsample without replacement (order randomized); all of them if count >= size.
std::vector<double> subsample(std::span<const double> values, std::size_t count, Rng& rng);

// cos(M(image_i), target) for each image; target is [1, d].
std::vector<double> target_similarities(const ImageFn& model, const Tensor& images,
                                        const Tensor& target_embedding);

// 100 * |{i : s_i >= tau}| / N. Throws DomainError on an empty set.
double asr(std::span<const double> similarities, double tau);
double asr(const ImageFn& model, const Tensor& images, const Tensor& target_embedding, double tau);

// Frechet distance between Gaussian fits of feature rows [n, d]. Covariances
// get a small ridge when n <= d. Throws DomainError if a covariance is not PSD
// beyond rounding or has non-finite entries.
double fid(const Tensor& features_a, const Tensor& features_b);

// [-1, 1] -> [0, 1].
Tensor to_unit(const Tensor& image);

inline constexpr double kPsnrCap = 100.0;
// 10 log10(1 / MSE) for [0, 1]-scale images of equal shape, capped at kPsnrCap.
double psnr(const Tensor& a, const Tensor& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};
// Mean local SSIM over valid Gaussian windows and channels; inputs [C, H, W] in [0, 1].
// Throws ShapeError on mismatched shapes or images smaller than the window.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& options = {});

// Normalized 1-D Gaussian window used by ssim (float64).
Tensor ssim_window(int size, double sigma);

// Published full-scale reference numbers, kept only as context rows in reports.
struct ReferencePoints {
  static constexpr double kCleanAsr = 7.29;
  static constexpr double kProtectedAsr = 76.96;
  static constexpr double kFid = 34.4405;
  static constexpr double kPsnr = 19.5045;
  static constexpr double kSsim = 0.7873;
};

struct ModelUnderTest {
  int model_id = 0;
  std::string role;  // "ensemble" or "holdout"
  ImageFn embed;
  Tensor target_embedding;  // [1, d]
  double tau = 0.0;
};

struct EvalInputs {
  std::string config_hash;
  std::string method;  // "amtgan", "pgd", ..., "none"
  std::vector<std::string> names;
  Tensor clean;       // [N, 3, H, W] in [-1, 1]
  Tensor protected_;  // same shape
  Tensor reference_style;  // reference-domain images for FID
  ImageFn fid_features;    // [N, 3, H, W] -> [N, f]
  std::vector<ModelUnderTest> models;
};

struct ModelMetrics {
  std::string role;
  double asr = 0.0;
  double asr_clean = 0.0;
  double tau = 0.0;
};

struct ImageRow {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  std::map<int, double> sim_clean;
  std::map<int, double> sim_protected;
};

struct MetricsReport {
  std::string config_hash;
  std::string method;
  std::map<int, ModelMetrics> models;
  double fid = 0.0;
  double fid_clean = 0.0;
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
  std::int64_t images = 0;
  std::vector<ImageRow> rows;
};

MetricsReport evaluate(const EvalInputs& inputs);

nlohmann::json report_json(const MetricsReport& report);
void write_report(const MetricsReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path);

nlohmann::json thresholds_json(const std::vector<VerificationThreshold>& thresholds);
std::vector<VerificationThreshold> thresholds_from_json(const nlohmann::json& doc);
void save_thresholds(const std::vector<VerificationThreshold>& thresholds,
                     const std::filesystem::path& path);
std::vector<VerificationThreshold> load_thresholds(const std::filesystem::path& path);

// Bar chart of protected vs clean ASR per model, written as PNG.
void plot_asr(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace amtgan::eval
