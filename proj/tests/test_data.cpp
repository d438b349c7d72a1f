#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <map>

#include <opencv2/imgcodecs.hpp>

#include "amtgan/data.hpp"
#include "amtgan/error.hpp"
#include "support.hpp"

using namespace amtgan;
using namespace amtgan::data;
namespace fs = std::filesystem;

namespace {

void write_solid(const fs::path& p, int h, int w, unsigned char v) {
  cv::Mat m(h, w, CV_8UC3, cv::Scalar(v, v, v));
  REQUIRE(cv::imwrite(p.string(), m));
}

}  // namespace

TEST_CASE("8-bit endpoints map to -1 and +1") {
  std::vector<std::uint8_t> black(4 * 4 * 3, 0), white(4 * 4 * 3, 255);
  CHECK(normalize_8bit(black, 4, 4).eq(-1.0f).all().item<bool>());
  CHECK(normalize_8bit(white, 4, 4).eq(1.0f).all().item<bool>());
}

TEST_CASE("denormalize inverts normalize for every gray level") {
  std::vector<std::uint8_t> levels(256 * 3);
  for (int v = 0; v < 256; ++v) levels[3 * v] = levels[3 * v + 1] = levels[3 * v + 2] = static_cast<std::uint8_t>(v);
  const auto back = denormalize_8bit(normalize_8bit(levels, 16, 16));
  CHECK(back == levels);
}

TEST_CASE("load_images: black/white files, corrupt file skipped, identity labels") {
  const auto dir = testsupport::temp_dir("load");
  write_solid(dir / "3_black.png", 20, 24, 0);
  write_solid(dir / "4_white.png", 10, 10, 255);
  write_solid(dir / "5_a.png", 16, 16, 128);
  write_solid(dir / "noid.png", 16, 16, 64);
  std::ofstream(dir / "6_corrupt.png") << "definitely not a png";
  const auto loaded = load_images(dir, 8);
  REQUIRE(loaded.faces.size() == 4);
  CHECK(loaded.warnings.size() == 1);
  CHECK(loaded.faces[0].image.identity_id == 3);
  CHECK(loaded.faces[0].image.pixels.sizes() == torch::IntArrayRef{3, 8, 8});
  CHECK(loaded.faces[0].image.pixels.eq(-1.0f).all().item<bool>());
  CHECK(loaded.faces[1].image.pixels.eq(1.0f).all().item<bool>());
  CHECK(loaded.faces[3].image.identity_id == -1);
  for (const auto& f : loaded.faces) {
    CHECK(f.masks.disjoint());
    CHECK(f.masks.nonempty());
  }
  fs::remove_all(dir);
}

TEST_CASE("load_images errors: missing directory, nothing decodable") {
  CHECK_THROWS_AS(load_images("/nonexistent/amtgan/dir", 8), ConfigError);
  const auto dir = testsupport::temp_dir("empty");
  std::ofstream(dir / "bad.jpg") << "junk";
  CHECK_THROWS_AS(load_images(dir, 8), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("mask sidecar channels decode to disjoint regions") {
  const auto dir = testsupport::temp_dir("mask");
  write_solid(dir / "1_face.png", 8, 8, 100);
  cv::Mat mask(8, 8, CV_8UC3, cv::Scalar(0, 0, 0));
  mask(cv::Rect(0, 0, 8, 2)).setTo(cv::Scalar(0, 0, 255));    // R: lips
  mask(cv::Rect(0, 2, 8, 2)).setTo(cv::Scalar(0, 255, 0));    // G: eyes
  mask(cv::Rect(0, 4, 8, 4)).setTo(cv::Scalar(255, 0, 0));    // B: face
  mask(cv::Rect(0, 0, 1, 1)).setTo(cv::Scalar(255, 255, 255));  // all set: lips wins
  REQUIRE(cv::imwrite((dir / "1_face.mask.png").string(), mask));
  const auto loaded = load_images(dir, 8);
  REQUIRE(loaded.faces.size() == 1);
  const auto& m = loaded.faces[0].masks;
  CHECK(m.lips.sum().item<int64_t>() == 16);
  CHECK(m.eyes.sum().item<int64_t>() == 16);
  CHECK(m.face.sum().item<int64_t>() == 32);
  CHECK(m.disjoint());
  fs::remove_all(dir);
}

TEST_CASE("synth_face is deterministic with valid pixels and masks") {
  for (int id : {0, 1, 7, 1234}) {
    for (auto dom : {StyleDomain::kSource, StyleDomain::kReference}) {
      Rng a(42), b(42);
      const auto fa = synth_face(id, dom, a, 32);
      const auto fb = synth_face(id, dom, b, 32);
      CHECK(torch::equal(fa.image.pixels, fb.image.pixels));
      CHECK(fa.image.pixels.isfinite().all().item<bool>());
      CHECK(fa.image.pixels.abs().max().item<float>() <= 1.0f);
      CHECK(fa.masks.disjoint());
      CHECK(fa.masks.nonempty());
      CHECK(fa.image.identity_id == id);
      CHECK(fa.image.domain == dom);
    }
  }
}

TEST_CASE("identity dominates within-identity jitter") {
  const auto s0 = synth_faces(0, 1, 100, StyleDomain::kSource, 5, 32);
  const auto s1 = synth_faces(1, 1, 100, StyleDomain::kSource, 6, 32);
  double within = 0.0, across = 0.0;
  int nw = 0, na = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    for (std::size_t j = i + 1; j < 100; j += 7) {
      within += (s0[i].image.pixels - s0[j].image.pixels).abs().mean().item<double>();
      within += (s1[i].image.pixels - s1[j].image.pixels).abs().mean().item<double>();
      nw += 2;
    }
    for (std::size_t j = 0; j < 100; j += 7) {
      across += (s0[i].image.pixels - s1[j].image.pixels).abs().mean().item<double>();
      ++na;
    }
  }
  CHECK(across / na > within / nw);
}

TEST_CASE("pair stream replay, degenerate case and uniformity") {
  auto src = std::make_shared<const FaceSet>(synth_faces(0, 10, 1, StyleDomain::kSource, 1, 16));
  auto ref = std::make_shared<const FaceSet>(synth_faces(0, 10, 1, StyleDomain::kReference, 2, 16));
  auto a = make_pair_stream(src, ref, 7);
  auto b = make_pair_stream(src, ref, 7);
  for (int i = 0; i < 50; ++i) {
    const auto pa = a.next();
    const auto pb = b.next();
    CHECK(pa.source == pb.source);
    CHECK(pa.reference == pb.reference);
  }

  auto one_src = std::make_shared<const FaceSet>(FaceSet{(*src)[0]});
  auto one_ref = std::make_shared<const FaceSet>(FaceSet{(*ref)[0]});
  auto single = make_pair_stream(one_src, one_ref, 3);
  for (int i = 0; i < 10; ++i) {
    const auto p = single.next();
    CHECK(p.source == 0);
    CHECK(p.reference == 0);
  }

  auto u = make_pair_stream(src, ref, 11);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 10000; ++i) ++counts[u.next().source];
  for (int c : counts) CHECK(std::abs(c - 1000) <= 150);

  int differing = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto p = make_pair_stream(src, ref, 1000 + 2 * s);
    auto q = make_pair_stream(src, ref, 1001 + 2 * s);
    bool differ = false;
    for (int i = 0; i < 10; ++i) {
      const auto x = p.next();
      const auto y = q.next();
      differ = differ || x.source != y.source || x.reference != y.reference;
    }
    differing += differ;
  }
  CHECK(differing >= 99);

  CHECK_THROWS_AS(make_pair_stream(std::make_shared<const FaceSet>(), ref, 1), ConfigError);
  CHECK_THROWS_AS(make_pair_stream(src, std::make_shared<const FaceSet>(), 1), ConfigError);
}

TEST_CASE("pair batches take x from sources and y from references") {
  auto src = std::make_shared<const FaceSet>(synth_faces(0, 4, 1, StyleDomain::kSource, 1, 16));
  auto ref = std::make_shared<const FaceSet>(synth_faces(0, 4, 1, StyleDomain::kReference, 2, 16));
  auto stream = make_pair_stream(src, ref, 9);
  auto replay = make_pair_stream(src, ref, 9);
  const auto batch = stream.next_batch(3);
  CHECK(batch.x.sizes() == torch::IntArrayRef{3, 3, 16, 16});
  CHECK(batch.masks_x.size() == 3);
  for (int i = 0; i < 3; ++i) {
    const auto p = replay.next();
    CHECK(torch::equal(batch.x[i], (*src)[p.source].image.pixels));
    CHECK(torch::equal(batch.y[i], (*ref)[p.reference].image.pixels));
  }
}

TEST_CASE("target identity caches the fresh embedding") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
  testsupport::LinearEmbedder e{torch::randn({5, 3 * 16 * 16}, gen)};
  Rng rng(1);
  const auto z = synth_face(99, StyleDomain::kSource, rng, 16).image;
  std::vector<ImageFn> models{e};
  const auto t = TargetIdentity::make(z, models);
  REQUIRE(t.embeddings.size() == 1);
  CHECK(torch::allclose(t.embeddings[0], e(z.pixels.unsqueeze(0))));
}

TEST_CASE("write_png then read_image round-trips 8-bit content") {
  const auto dir = testsupport::temp_dir("png");
  Rng rng(4);
  const auto f = synth_face(2, StyleDomain::kSource, rng, 16);
  const auto q = normalize_8bit(denormalize_8bit(f.image.pixels), 16, 16);
  write_png(q, dir / "a.png");
  CHECK(torch::equal(read_image(dir / "a.png", 16), q));
  write_png(q, dir / "b.png", 20, 30);
  CHECK(image_size(dir / "b.png") == std::pair<int, int>{20, 30});
  fs::remove_all(dir);
}
