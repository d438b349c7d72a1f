#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <random>
#include <numeric>
#include <set>
#include <sstream>

#include "amtgan/error.hpp"
#include "amtgan/evaluation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace amtgan;
using namespace amtgan::eval;
namespace fs = std::filesystem;
using testsupport::naive_ssim;

namespace {

std::vector<double> uniform_scores(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(eng);
  return v;
}

}  // namespace

TEST_CASE("calibration quantile definition") {
  std::vector<double> s(1000, -1.0);
  s[123] = 0.9;
  const auto t = calibrate_threshold(0, s, 0.001);
  CHECK(t.tau > -1.0);
  CHECK(t.tau <= 0.9);
  CHECK(t.far_achieved == doctest::Approx(0.001));
  const auto z = calibrate_threshold(0, s, 0.0);
  CHECK(z.tau > 0.9);
  CHECK(z.far_achieved == 0.0);
  CHECK_THROWS_AS(calibrate_threshold(0, std::vector<double>(999, 0.0), 0.01), DomainError);
}

TEST_CASE("calibration on uniform scores and re-measurement on fresh scores") {
  const auto cal = uniform_scores(100000, 1);
  const auto t = calibrate_threshold(3, cal, 0.01);
  CHECK(std::abs(t.tau - 0.98) <= 0.01);
  CHECK(t.pairs == 100000);
  const auto held = uniform_scores(100000, 2);
  CHECK(std::abs(acceptance_rate(held, t.tau) - 0.01) <= 0.002);
}

TEST_CASE("negative pairs and subsampling") {
  const auto e = torch::tensor({{1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}});
  const auto labels = torch::tensor({7, 7, 8});
  const auto neg = negative_pair_similarities(e, labels);
  REQUIRE(neg.size() == 2);
  CHECK(neg[0] == doctest::Approx(0.0));
  Rng rng(1);
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 0.0);
  const auto sub = subsample(v, 10, rng);
  CHECK(sub.size() == 10);
  CHECK(std::set<double>(sub.begin(), sub.end()).size() == 10);
  CHECK(subsample(v, 1000, rng).size() == 100);
}

TEST_CASE("ASR counts") {
  CHECK(asr(std::vector<double>(5, 1.0), 0.7) == 100.0);
  CHECK(asr(std::vector<double>{0.1, 0.2, 0.3}, 0.7) == 0.0);
  std::vector<double> mixed{0.9, 0.1, 0.8, 0.2, 0.75, 0.3, 0.1, 0.0, -0.5, 0.69};
  CHECK(asr(mixed, 0.7) == doctest::Approx(30.0));
  CHECK_THROWS_AS(asr(std::vector<double>{}, 0.5), DomainError);
  double prev = 101;
  for (double tau = -1; tau <= 1; tau += 0.05) {
    const double a = asr(mixed, tau);
    CHECK(a <= prev);
    prev = a;
  }
  // Images identical to the target under a stub embedder.
  auto gen = at::make_generator<at::CPUGeneratorImpl>(2);
  testsupport::LinearEmbedder m{torch::randn({4, 3 * 4 * 4}, gen)};
  const auto z = testsupport::random_image(1, 4, 4, 3);
  CHECK(asr(m, z.repeat({6, 1, 1, 1}), m(z), 0.99) == 100.0);
}

TEST_CASE("FID oracles") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(5);
  const auto a = torch::randn({500, 6}, gen, torch::kFloat64);
  CHECK(fid(a, a) == doctest::Approx(0.0).epsilon(0).scale(1).epsilon(1e-6));
  CHECK(std::abs(fid(a, a)) <= 1e-6);
  const auto b = torch::randn({400, 6}, gen, torch::kFloat64) * 1.5 + 0.3;
  CHECK(std::abs(fid(a, b) - fid(b, a)) <= 1e-6);

  const auto x1 = torch::randn({10000, 1}, gen, torch::kFloat64);
  const auto y1 = torch::randn({10000, 1}, gen, torch::kFloat64) + 1.0;
  CHECK(std::abs(fid(x1, y1) - 1.0) <= 0.1);

  const auto m = torch::tensor({1.0, 1.0, 1.0, 1.0}, torch::kFloat64);  // |m|^2 = 4
  const auto xa = torch::randn({20000, 4}, gen, torch::kFloat64);
  const auto xb = torch::randn({20000, 4}, gen, torch::kFloat64) + m;
  CHECK(std::abs(fid(xa, xb) - 4.0) <= 0.3);

  // Fewer samples than dimensions still yields a finite, non-negative value.
  const auto s1 = torch::randn({5, 10}, gen, torch::kFloat64);
  const auto s2 = torch::randn({5, 10}, gen, torch::kFloat64);
  CHECK(fid(s1, s2) >= 0.0);
  CHECK_THROWS_AS(fid(torch::randn({1, 3}), torch::randn({5, 3})), DomainError);
  CHECK_THROWS_AS(fid(torch::randn({5, 3}), torch::randn({5, 4})), ShapeError);
}

TEST_CASE("PSNR") {
  const auto a = torch::zeros({3, 8, 8});
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr(a, torch::full({3, 8, 8}, 0.5)) == doctest::Approx(10 * std::log10(4.0)).epsilon(1e-12));
  CHECK(psnr(a, torch::full({3, 8, 8}, 0.5)) == doctest::Approx(6.0206).epsilon(1e-5));
  auto gen = at::make_generator<at::CPUGeneratorImpl>(6);
  const auto x = torch::rand({3, 8, 8}, gen, torch::kFloat64), y = torch::rand({3, 8, 8}, gen, torch::kFloat64);
  double mse = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double d = x.view(-1)[i].item<double>() - y.view(-1)[i].item<double>();
    mse += d * d;
  }
  mse /= static_cast<double>(x.numel());
  CHECK(psnr(x, y) == doctest::Approx(10 * std::log10(1 / mse)).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(x, torch::zeros({3, 8, 9})), ShapeError);
  CHECK(to_unit(torch::tensor({-1.0, 1.0})).equal(torch::tensor({0.0, 1.0})));
}

TEST_CASE("SSIM oracles") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(7);
  const auto a = torch::rand({3, 20, 18}, gen, torch::kFloat64);
  const auto b = (a + 0.2 * torch::rand({3, 20, 18}, gen, torch::kFloat64)).clamp(0, 1);
  CHECK(std::abs(ssim(a, a) - 1.0) <= 1e-6);
  CHECK(std::abs(ssim(a, b) - naive_ssim(a, b, 11, 1.5)) <= 1e-6);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) <= 1e-9);
  const double c1 = 1e-4;
  CHECK(ssim(torch::zeros({1, 11, 11}), torch::ones({1, 11, 11})) == doctest::Approx(c1 / (1 + c1)).epsilon(1e-9));
  CHECK_THROWS_AS(ssim(torch::zeros({3, 10, 10}), torch::zeros({3, 10, 10})), ShapeError);
  CHECK(ssim_window(11, 1.5).sum().item<double>() == doctest::Approx(1.0));
}

TEST_CASE("report aggregates agree with the per-image CSV; thresholds round-trip; plot") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(8);
  testsupport::LinearEmbedder m{torch::randn({4, 3 * 12 * 12}, gen)};
  EvalInputs in;
  in.config_hash = "abc";
  in.method = "pgd";
  in.clean = testsupport::random_image(6, 12, 12, 1);
  in.protected_ = (in.clean + 0.1 * torch::randn(in.clean.sizes(), gen)).clamp(-1, 1);
  in.reference_style = testsupport::random_image(6, 12, 12, 2);
  in.fid_features = [](const Tensor& x) { return x.mean({2, 3}); };
  for (int i = 0; i < 6; ++i) in.names.push_back("img" + std::to_string(i));
  const auto z = testsupport::random_image(1, 12, 12, 3);
  in.models.push_back({0, "holdout", m, m(z), 0.0});
  const auto r = evaluate(in);
  CHECK(r.images == 6);
  CHECK(r.models.at(0).role == "holdout");
  CHECK(r.fid >= 0);

  const auto dir = testsupport::temp_dir("report");
  write_report(r, dir / "r.json", dir / "r.csv");
  std::ifstream csv(dir / "r.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "image,psnr,ssim,sim_clean_0,sim_protected_0");
  double psnr_sum = 0, ssim_sum = 0;
  int accepted = 0, accepted_clean = 0, rows = 0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string name, f;
    std::getline(ss, name, ',');
    std::vector<double> v;
    while (std::getline(ss, f, ',')) v.push_back(std::stod(f));
    psnr_sum += v[0];
    ssim_sum += v[1];
    accepted_clean += v[2] >= 0.0;
    accepted += v[3] >= 0.0;
    ++rows;
  }
  CHECK(rows == 6);
  CHECK(psnr_sum / 6 == doctest::Approx(r.psnr_mean).epsilon(1e-12));
  CHECK(ssim_sum / 6 == doctest::Approx(r.ssim_mean).epsilon(1e-12));
  CHECK(100.0 * accepted / 6 == doctest::Approx(r.models.at(0).asr));
  CHECK(100.0 * accepted_clean / 6 == doctest::Approx(r.models.at(0).asr_clean));

  std::ifstream js(dir / "r.json");
  const auto doc = nlohmann::json::parse(js);
  CHECK(doc["config_hash"] == "abc");
  CHECK(doc["models"]["0"]["asr"].get<double>() == r.models.at(0).asr);

  std::vector<VerificationThreshold> th{{0, 0.81234567890123, 0.01, 0.0101, 100000}, {2, -0.5, 0.0, 0.0, 5000}};
  save_thresholds(th, dir / "t.json");
  const auto back = load_thresholds(dir / "t.json");
  REQUIRE(back.size() == 2);
  CHECK(back[0].tau == th[0].tau);
  CHECK(back[1].model_id == 2);
  CHECK(back[0].pairs == 100000);

  plot_asr(r, dir / "asr.png");
  CHECK(fs::file_size(dir / "asr.png") > 100);
  fs::remove_all(dir);
}
