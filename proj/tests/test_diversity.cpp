#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "amtgan/diversity.hpp"
#include "amtgan/error.hpp"
#include "support.hpp"

using namespace amtgan;
using namespace amtgan::diversity;

TEST_CASE("config validation") {
  DiversityConfig c;
  CHECK_NOTHROW(c.validate());
  c.p = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.scale_low = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.scale_low = 0.9;
  c.scale_high = 0.8;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.noise_sigma = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("p = 0 never transforms") {
  DiversityConfig c;
  c.p = 0.0;
  Rng rng(1);
  const auto x = testsupport::random_image(2, 16, 16, 1);
  for (int i = 0; i < 20; ++i) {
    bool applied = true;
    CHECK(torch::equal(transform(x, c, rng, applied), x));
    CHECK_FALSE(applied);
  }
}

TEST_CASE("unit scale and zero noise is the identity even when applied") {
  DiversityConfig c{1.0, 1.0, 1.0, 0.0};
  Rng rng(2);
  const auto x = testsupport::random_image(1, 16, 16, 2);
  bool applied = false;
  CHECK(torch::allclose(transform(x, c, rng, applied), x, 0, 1e-6));
  CHECK(applied);
}

TEST_CASE("transform keeps shape and range, and replays from the seed") {
  DiversityConfig c{1.0, 0.7, 0.9, 0.2};
  const auto x = testsupport::random_image(3, 16, 16, 3);
  Rng a(5), b(5);
  const auto ta = transform(x, c, a);
  const auto tb = transform(x, c, b);
  CHECK(ta.sizes() == x.sizes());
  CHECK(ta.abs().max().item<float>() <= 1.0f);
  CHECK(torch::equal(ta, tb));
  CHECK_FALSE(torch::equal(ta, x));
}

TEST_CASE("application frequency follows p") {
  DiversityConfig c;
  c.p = 0.3;
  Rng rng(6);
  const auto x = testsupport::random_image(1, 8, 8, 4);
  int hits = 0;
  for (int i = 0; i < 2000; ++i) {
    bool applied = false;
    transform(x, c, rng, applied);
    hits += applied;
  }
  CHECK(std::abs(hits - 600) < 80);
}

TEST_CASE("noise has the configured spread before clamping") {
  Rng rng(7);
  const auto x = torch::zeros({1, 3, 64, 64});
  const auto n = gaussian_noise(x, 0.1, rng);
  CHECK(n.std().item<double>() == doctest::Approx(0.1).epsilon(0.05));
  CHECK(torch::equal(gaussian_noise(x, 0.0, rng), x));
}

TEST_CASE("resize is differentiable") {
  Rng rng(8);
  const auto x = testsupport::random_image(1, 16, 16, 5).requires_grad_(true);
  random_resize(x, 0.8, 0.8, rng).sum().backward();
  CHECK(x.grad().defined());
  CHECK(x.grad().abs().sum().item<double>() > 0.0);
}
