#include "amtgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "amtgan/error.hpp"

namespace amtgan::eval {

VerificationThreshold calibrate_threshold(int model_id, std::span<const double> negatives,
                                          double far_target) {
  if (static_cast<std::int64_t>(negatives.size()) < kMinCalibrationPairs) {
    throw DomainError("threshold calibration needs at least " +
                      std::to_string(kMinCalibrationPairs) + " negative pairs, got " +
                      std::to_string(negatives.size()));
  }
  if (!(far_target >= 0.0 && far_target <= 1.0)) throw DomainError("far must lie in [0, 1]");
  std::vector<double> s(negatives.begin(), negatives.end());
  std::sort(s.begin(), s.end(), std::greater<>());
  const auto m = static_cast<std::size_t>(std::floor(far_target * static_cast<double>(s.size())));
  VerificationThreshold t;
  t.model_id = model_id;
  t.far_target = far_target;
  t.pairs = static_cast<std::int64_t>(s.size());
  t.tau = m == 0 ? std::nextafter(s.front(), std::numeric_limits<double>::infinity()) : s[m - 1];
  t.far_achieved = acceptance_rate(s, t.tau);
  return t;
}

double acceptance_rate(std::span<const double> similarities, double tau) {
  if (similarities.empty()) return 0.0;
  const auto accepted = std::count_if(similarities.begin(), similarities.end(),
                                      [tau](double v) { return v >= tau; });
  return static_cast<double>(accepted) / static_cast<double>(similarities.size());
}

std::vector<double> negative_pair_similarities(const Tensor& embeddings, const Tensor& labels) {
  const Tensor e = embeddings.detach().to(torch::kFloat64).contiguous();
  const Tensor sims = torch::mm(e, e.t()).contiguous();
  const Tensor lab = labels.to(torch::kInt64).contiguous();
  auto sa = sims.accessor<double, 2>();
  auto la = lab.accessor<int64_t, 1>();
  std::vector<double> out;
  for (int64_t i = 0; i < e.size(0); ++i) {
    for (int64_t j = i + 1; j < e.size(0); ++j) {
      if (la[i] != la[j]) out.push_back(sa[i][j]);
    }
  }
  return out;
}

std::vector<double> subsample(std::span<const double> values, std::size_t count, Rng& rng) {
  std::vector<double> v(values.begin(), values.end());
  const std::size_t k = std::min(count, v.size());
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(v.size() - i)));
    std::swap(v[i], v[j]);
  }
  v.resize(k);
  return v;
}

namespace {

Tensor in_chunks(const ImageFn& fn, const Tensor& images) {
  torch::NoGradGuard no_grad;
  std::vector<Tensor> parts;
  for (int64_t i = 0; i < images.size(0); i += 64) {
    parts.push_back(fn(images.slice(0, i, std::min(images.size(0), i + 64))));
  }
  return torch::cat(parts);
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw DomainError("fid: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -1e-8 * scale) throw DomainError("fid: covariance is not positive semidefinite");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

std::vector<double> target_similarities(const ImageFn& model, const Tensor& images,
                                        const Tensor& target_embedding) {
  const Tensor e = in_chunks(model, images).to(torch::kFloat64);
  const Tensor t = target_embedding.detach().to(torch::kFloat64).reshape({1, -1});
  const Tensor cos = torch::nn::functional::cosine_similarity(
      e, t.expand_as(e), torch::nn::functional::CosineSimilarityFuncOptions().dim(1));
  const Tensor c = cos.contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

double asr(std::span<const double> similarities, double tau) {
  if (similarities.empty()) throw DomainError("asr of an empty image set");
  return 100.0 * acceptance_rate(similarities, tau);
}

double asr(const ImageFn& model, const Tensor& images, const Tensor& target_embedding, double tau) {
  if (images.size(0) == 0) throw DomainError("asr of an empty image set");
  return asr(target_similarities(model, images, target_embedding), tau);
}

double fid(const Tensor& features_a, const Tensor& features_b) {
  if (features_a.dim() != 2 || features_b.dim() != 2 || features_a.size(1) != features_b.size(1)) {
    throw ShapeError("fid: expected feature matrices [n, d] with equal d");
  }
  if (features_a.size(0) < 2 || features_b.size(0) < 2) throw DomainError("fid needs >= 2 samples per set");
  const auto moments = [](const Tensor& f, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    const Tensor t = f.detach().to(torch::kFloat64).contiguous();
    const Eigen::Map<const RowMatrix> x(t.data_ptr<double>(), t.size(0), t.size(1));
    mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
    cov = (c.transpose() * c) / static_cast<double>(t.size(0) - 1);
    if (t.size(0) <= t.size(1)) cov += 1e-6 * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
    if (!cov.allFinite() || !mu.allFinite()) throw DomainError("fid: non-finite features");
  };
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(features_a, mu_a, cov_a);
  moments(features_b, mu_b, cov_b);
  const Eigen::MatrixXd sa = psd_sqrt(cov_a);
  Eigen::MatrixXd m = sa * cov_b * sa;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw DomainError("fid: eigendecomposition failed");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, d);
}

Tensor to_unit(const Tensor& image) { return (image + 1.0) * 0.5; }

double psnr(const Tensor& a, const Tensor& b) {
  if (a.sizes() != b.sizes()) throw ShapeError("psnr: shape mismatch");
  const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

Tensor ssim_window(int size, double sigma) {
  const Tensor t = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
  const Tensor w = torch::exp(-(t * t) / (2.0 * sigma * sigma));
  return w / w.sum();
}

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& o) {
  if (a.sizes() != b.sizes() || a.dim() != 3) throw ShapeError("ssim: expected equal [C, H, W] shapes");
  if (a.size(1) < o.window || a.size(2) < o.window) throw ShapeError("ssim: image smaller than window");
  const int64_t c = a.size(0);
  const Tensor w1 = ssim_window(o.window, o.sigma);
  const Tensor w = torch::outer(w1, w1).expand({c, 1, o.window, o.window}).contiguous();
  const auto filt = [&](const Tensor& t) { return torch::nn::functional::conv2d(t, w, torch::nn::functional::Conv2dFuncOptions().groups(c)); };
  const Tensor x = a.to(torch::kFloat64).unsqueeze(0);
  const Tensor y = b.to(torch::kFloat64).unsqueeze(0);
  const Tensor mx = filt(x);
  const Tensor my = filt(y);
  const Tensor sxx = filt(x * x) - mx * mx;
  const Tensor syy = filt(y * y) - my * my;
  const Tensor sxy = filt(x * y) - mx * my;
  const double c1 = (o.k1 * 1.0) * (o.k1 * 1.0);
  const double c2 = (o.k2 * 1.0) * (o.k2 * 1.0);
  const Tensor map = ((2 * mx * my + c1) * (2 * sxy + c2)) /
                     ((mx * mx + my * my + c1) * (sxx + syy + c2));
  return map.mean().item<double>();
}

MetricsReport evaluate(const EvalInputs& in) {
  const int64_t n = in.clean.size(0);
  if (n == 0) throw DomainError("evaluation needs at least one image");
  if (in.protected_.sizes() != in.clean.sizes()) throw ShapeError("protected and clean sets differ in shape");
  if (static_cast<int64_t>(in.names.size()) != n) throw DomainError("one name per image required");

  MetricsReport r;
  r.config_hash = in.config_hash;
  r.method = in.method;
  r.images = n;
  r.rows.resize(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    auto& row = r.rows[static_cast<std::size_t>(i)];
    row.name = in.names[static_cast<std::size_t>(i)];
    const Tensor a = to_unit(in.protected_[i]);
    const Tensor b = to_unit(in.clean[i]);
    row.psnr = psnr(a, b);
    row.ssim = ssim(a, b);
    r.psnr_mean += row.psnr / static_cast<double>(n);
    r.ssim_mean += row.ssim / static_cast<double>(n);
  }
  for (const auto& m : in.models) {
    const auto clean = target_similarities(m.embed, in.clean, m.target_embedding);
    const auto prot = target_similarities(m.embed, in.protected_, m.target_embedding);
    r.models[m.model_id] = {m.role, asr(prot, m.tau), asr(clean, m.tau), m.tau};
    for (int64_t i = 0; i < n; ++i) {
      r.rows[static_cast<std::size_t>(i)].sim_clean[m.model_id] = clean[static_cast<std::size_t>(i)];
      r.rows[static_cast<std::size_t>(i)].sim_protected[m.model_id] = prot[static_cast<std::size_t>(i)];
    }
  }
  if (in.fid_features) {
    const Tensor ref = in_chunks(in.fid_features, in.reference_style);
    r.fid = fid(in_chunks(in.fid_features, in.protected_), ref);
    r.fid_clean = fid(in_chunks(in.fid_features, in.clean), ref);
  }
  return r;
}

nlohmann::json report_json(const MetricsReport& r) {
  nlohmann::json models = nlohmann::json::object();
  for (const auto& [id, m] : r.models) {
    models[std::to_string(id)] = {{"role", m.role}, {"asr", m.asr}, {"asr_clean", m.asr_clean}, {"tau", m.tau}};
  }
  return {{"config_hash", r.config_hash},
          {"method", r.method},
          {"images", r.images},
          {"models", models},
          {"fid", r.fid},
          {"fid_clean", r.fid_clean},
          {"psnr_mean", r.psnr_mean},
          {"ssim_mean", r.ssim_mean},
          {"reference_points",
           {{"note", "published full-scale numbers, context only"},
            {"asr_clean", ReferencePoints::kCleanAsr},
            {"asr_protected", ReferencePoints::kProtectedAsr},
            {"fid", ReferencePoints::kFid},
            {"psnr", ReferencePoints::kPsnr},
            {"ssim", ReferencePoints::kSsim}}}};
}

void write_report(const MetricsReport& r, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path) {
  {
    std::ofstream out(json_path);
    if (!out) throw IoError("cannot write " + json_path.string());
    out << report_json(r).dump(2) << '\n';
  }
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  csv << "image,psnr,ssim";
  for (const auto& [id, m] : r.models) csv << ",sim_clean_" << id << ",sim_protected_" << id;
  csv << '\n' << std::setprecision(17);
  for (const auto& row : r.rows) {
    csv << row.name << ',' << row.psnr << ',' << row.ssim;
    for (const auto& [id, m] : r.models) csv << ',' << row.sim_clean.at(id) << ',' << row.sim_protected.at(id);
    csv << '\n';
  }
}

nlohmann::json thresholds_json(const std::vector<VerificationThreshold>& thresholds) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : thresholds) {
    arr.push_back({{"model_id", t.model_id},
                   {"tau", t.tau},
                   {"far_target", t.far_target},
                   {"far_achieved", t.far_achieved},
                   {"pairs", t.pairs}});
  }
  return {{"thresholds", arr}};
}

std::vector<VerificationThreshold> thresholds_from_json(const nlohmann::json& doc) {
  std::vector<VerificationThreshold> out;
  try {
    for (const auto& j : doc.at("thresholds")) {
      VerificationThreshold t;
      t.model_id = j.at("model_id").get<int>();
      t.tau = j.at("tau").get<double>();
      t.far_target = j.at("far_target").get<double>();
      t.far_achieved = j.at("far_achieved").get<double>();
      t.pairs = j.at("pairs").get<std::int64_t>();
      out.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed thresholds document: ") + e.what());
  }
  return out;
}

void save_thresholds(const std::vector<VerificationThreshold>& thresholds,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << thresholds_json(thresholds).dump(2) << '\n';
}

std::vector<VerificationThreshold> load_thresholds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read thresholds file " + path.string());
  try {
    return thresholds_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("thresholds file " + path.string() + " is not JSON: " + e.what());
  }
}

void plot_asr(const MetricsReport& r, const std::filesystem::path& path) {
  const int bar = 36, gap = 28, left = 60, top = 40, height = 260;
  const int groups = static_cast<int>(r.models.size());
  const int width = left + groups * (2 * bar + gap) + gap;
  cv::Mat img(top + height + 60, std::max(width, 320), CV_8UC3, cv::Scalar(255, 255, 255));
  const int base = top + height;
  cv::line(img, {left - 5, base}, {img.cols - 10, base}, cv::Scalar(0, 0, 0), 1);
  for (int pct = 0; pct <= 100; pct += 25) {
    const int yy = base - pct * height / 100;
    cv::line(img, {left - 5, yy}, {left, yy}, cv::Scalar(0, 0, 0), 1);
    cv::putText(img, std::to_string(pct), {8, yy + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1);
  }
  int xx = left + gap / 2;
  for (const auto& [id, m] : r.models) {
    const auto draw = [&](double v, const cv::Scalar& color) {
      const int h = static_cast<int>(std::lround(v / 100.0 * height));
      cv::rectangle(img, {xx, base - h}, {xx + bar - 2, base}, color, cv::FILLED);
      xx += bar;
    };
    const int group_x = xx;
    draw(m.asr_clean, cv::Scalar(170, 170, 170));
    draw(m.asr, cv::Scalar(180, 90, 30));
    cv::putText(img, "M" + std::to_string(id) + " " + m.role.substr(0, 4), {group_x, base + 18},
                cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1);
    xx += gap;
  }
  cv::putText(img, "ASR % (grey: clean, blue: " + r.method + ")", {left, 24},
              cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0), 1);
  if (!cv::imwrite(path.string(), img)) throw IoError("cannot write " + path.string());
}

}  // namespace amtgan::eval
