#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "amtgan/attacks.hpp"
#include "amtgan/error.hpp"
#include "support.hpp"

using namespace amtgan;
using namespace amtgan::attacks;

namespace {

// Hand gradient of 1 - cos(t, W x) with respect to x, plain loops in double.
std::vector<double> linear_grad(const std::vector<double>& w, int d, const std::vector<double>& x,
                                const std::vector<double>& t) {
  const int n = static_cast<int>(x.size());
  std::vector<double> v(d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < n; ++j) v[i] += w[i * n + j] * x[j];
  double tv = 0, tt = 0, vv = 0;
  for (int i = 0; i < d; ++i) {
    tv += t[i] * v[i];
    tt += t[i] * t[i];
    vv += v[i] * v[i];
  }
  const double nt = std::sqrt(tt), nv = std::sqrt(vv);
  std::vector<double> dcos(d);
  for (int i = 0; i < d; ++i) dcos[i] = t[i] / (nt * nv) - tv * v[i] / (nt * nv * nv * nv);
  std::vector<double> g(n, 0.0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) g[j] -= w[i * n + j] * dcos[i];
  return g;
}

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

std::vector<double> to_vec(const Tensor& t) {
  const auto c = t.to(torch::kFloat64).contiguous().view(-1);
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

struct LinearSetup {
  int d = 3;
  Tensor w, x, t;
  std::vector<ImageFn> models;
  std::vector<Tensor> targets;

  LinearSetup() {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(4);
    w = torch::randn({d, 12}, gen).to(torch::kFloat64);
    x = (torch::rand({1, 3, 2, 2}, gen) * 1.6 - 0.8).to(torch::kFloat64);
    t = torch::randn({1, d}, gen).to(torch::kFloat64);
    models = {testsupport::LinearEmbedder{w}};
    targets = {t};
  }
};

std::vector<double> project_vec(const std::vector<double>& v, const std::vector<double>& x0, double eps) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::clamp(std::clamp(v[i], x0[i] - eps, x0[i] + eps), -1.0, 1.0);
  return out;
}

}  // namespace

TEST_CASE("config validation and method names") {
  AttackConfig c;
  CHECK_NOTHROW(c.validate());
  c.kernel_size = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.step_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.epsilon = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_method("tidim") == Method::kTidim);
  CHECK(method_name(parse_method("mifgsm")) == "mifgsm");
  CHECK_THROWS_AS(parse_method("fgsm"), ConfigError);
  CHECK(epsilon_from_8bit(8) == doctest::Approx(16.0 / 255.0));
}

TEST_CASE("one PGD step on a linear embedder matches the hand gradient") {
  LinearSetup s;
  AttackConfig c;
  c.epsilon = 0.05;
  c.step_size = 0.03;
  c.iterations = 1;
  const auto out = to_vec(pgd_targeted(s.x, s.targets, s.models, c));
  const auto x0 = to_vec(s.x);
  const auto g = linear_grad(to_vec(s.w), s.d, x0, to_vec(s.t));
  std::vector<double> step(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) step[i] = x0[i] - c.step_size * sgn(g[i]);
  const auto expect = project_vec(step, x0, c.epsilon);
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("two MI-FGSM steps match the hand accumulator") {
  LinearSetup s;
  AttackConfig c;
  c.epsilon = 0.2;
  c.step_size = 0.05;
  c.iterations = 2;
  c.momentum = 0.7;
  const auto out = to_vec(mifgsm_targeted(s.x, s.targets, s.models, c));
  const auto w = to_vec(s.w), t = to_vec(s.t), x0 = to_vec(s.x);
  std::vector<double> acc(x0.size(), 0.0), x = x0;
  for (int it = 0; it < 2; ++it) {
    const auto g = linear_grad(w, s.d, x, t);
    double l1 = 0;
    for (double v : g) l1 += std::abs(v);
    for (std::size_t i = 0; i < x.size(); ++i) {
      acc[i] = c.momentum * acc[i] + g[i] / l1;
      x[i] -= c.step_size * sgn(acc[i]);
    }
    x = project_vec(x, x0, c.epsilon);
  }
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("budget invariants, zero budget, re-projection idempotence") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(8);
  testsupport::LinearEmbedder e{torch::randn({8, 3 * 8 * 8}, gen)};
  std::vector<ImageFn> models{e};
  std::vector<Tensor> targets{torch::randn({1, 8}, gen)};
  const auto x = testsupport::random_image(3, 8, 8, 9);
  AttackConfig c;
  c.iterations = 10;
  c.step_size = 0.02;
  c.kernel_size = 3;
  Rng rng(1);
  for (auto m : {Method::kPgd, Method::kMifgsm, Method::kTidim}) {
    c.epsilon = 0.05;
    const auto adv = run(m, x, targets, models, c, rng);
    CHECK((adv - x).abs().max().item<double>() <= c.epsilon + 1e-6);
    CHECK(adv.abs().max().item<double>() <= 1.0);
    CHECK(torch::equal(project(adv, x, c.epsilon), adv));
    c.epsilon = 0.0;
    CHECK(torch::equal(run(m, x, targets, models, c, rng), x));
  }
  CHECK(torch::equal(run(Method::kNone, x, targets, models, c, rng), x));
}

TEST_CASE("degenerate momentum and degenerate TI reduce bit-exactly") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(10);
  testsupport::LinearEmbedder e1{torch::randn({8, 3 * 8 * 8}, gen)};
  testsupport::LinearEmbedder e2{torch::randn({8, 3 * 8 * 8}, gen)};
  std::vector<ImageFn> models{e1, e2};
  std::vector<Tensor> targets{torch::randn({1, 8}, gen), torch::randn({1, 8}, gen)};
  const auto x = testsupport::random_image(2, 8, 8, 11);
  AttackConfig c;
  c.iterations = 8;
  c.momentum = 0.0;
  CHECK(torch::equal(mifgsm_targeted(x, targets, models, c), pgd_targeted(x, targets, models, c)));
  c.momentum = 1.0;
  c.kernel_size = 1;
  c.diversity.p = 0.0;
  Rng rng(2);
  CHECK(torch::equal(tidim_targeted(x, targets, models, c, rng), mifgsm_targeted(x, targets, models, c)));
}

TEST_CASE("Gaussian smoothing kernel") {
  for (int k : {1, 3, 5, 7, 15}) {
    const auto g = gaussian_kernel(k);
    CHECK(g.sum().item<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(torch::equal(g, g.t()));
  }
  CHECK_THROWS_AS(gaussian_kernel(4), ConfigError);
  const auto field = torch::full({1, 3, 12, 12}, 0.7, torch::kFloat64);
  const auto smoothed = smooth_gradient(field, 5);
  const auto interior = smoothed.slice(2, 2, 10).slice(3, 2, 10);
  CHECK(torch::allclose(interior, torch::full_like(interior, 0.7), 0, 1e-12));
}
