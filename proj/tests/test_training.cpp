#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>

#include "amtgan/error.hpp"
#include "amtgan/toy_fr.hpp"
#include "amtgan/training.hpp"
#include "support.hpp"

using namespace amtgan;
using namespace amtgan::training;
namespace fs = std::filesystem;

namespace {

constexpr int kRes = 16;

struct Fixture {
  std::shared_ptr<const data::FaceSet> sources, references;
  std::vector<ImageFn> ensemble;
  data::TargetIdentity target;

  Fixture() {
    sources = std::make_shared<const data::FaceSet>(data::synth_faces(0, 8, 2, data::StyleDomain::kSource, 1, kRes));
    references = std::make_shared<const data::FaceSet>(data::synth_faces(0, 8, 2, data::StyleDomain::kReference, 2, kRes));
    for (int k = 0; k < 2; ++k) {
      nets::FrEmbedder m(nets::EmbedderArch::draw(k, 40 + k));
      for (auto& p : m->parameters()) p.requires_grad_(false);
      ensemble.push_back(nets::as_embed_fn(m));
    }
    Rng rng(3);
    target = data::TargetIdentity::make(data::synth_face(99, data::StyleDomain::kSource, rng, kRes).image, ensemble);
  }
};

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.epochs = 1000;
  c.generator.base_channels = 8;
  c.discriminator.base_channels = 8;
  c.regularizer.channels = 8;
  c.regularizer.growth = 4;
  c.regularizer.rrdb_blocks = 1;
  return c;
}

struct Digests {
  std::string g, dx, dy, h;
  explicit Digests(GanNets& n)
      : g(nets::parameter_digest(*n.g)), dx(nets::parameter_digest(*n.d_x)),
        dy(nets::parameter_digest(*n.d_y)), h(nets::parameter_digest(*n.h)) {}
};

bool same_report(const losses::LossReport& a, const losses::LossReport& b) {
  const auto& s = a.terms;
  const auto& t = b.terms;
  return s.d_gan == t.d_gan && s.g_gan == t.g_gan && s.g_reg == t.g_reg && s.g_adv == t.g_adv &&
         s.g_make == t.g_make && s.idt == t.idt && s.h_gan == t.h_gan && s.h_adv == t.h_adv &&
         s.h_make == t.h_make && a.g_total == b.g_total && a.h_total == b.h_total && a.d_total == b.d_total;
}

double max_diff(const losses::LossReport& a, const losses::LossReport& b) {
  const auto& s = a.terms;
  const auto& t = b.terms;
  double m = 0;
  for (auto [u, v] : {std::pair{s.d_gan, t.d_gan}, {s.g_gan, t.g_gan}, {s.g_reg, t.g_reg}, {s.g_adv, t.g_adv},
                      {s.g_make, t.g_make}, {s.idt, t.idt}, {s.h_gan, t.h_gan}, {s.h_adv, t.h_adv},
                      {s.h_make, t.h_make}, {a.g_total, b.g_total}, {a.h_total, b.h_total}}) {
    m = std::max(m, std::abs(u - v));
  }
  return m;
}

TrainRequest request(const Fixture& f, const TrainConfig& c) {
  TrainRequest r;
  r.config = c;
  r.config_hash = "hash-a";
  r.sources = f.sources;
  r.references = f.references;
  r.ensemble = f.ensemble;
  r.target = f.target;
  return r;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.adam_beta2 = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.holdout_id = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0.0;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("sub-steps only touch their own networks") {
  Fixture f;
  Trainer t(small_config(), f.ensemble, f.target);
  auto stream = data::make_pair_stream(f.sources, f.references, 5);
  const auto in = t.prepare(stream.next_batch(4));

  Digests before(t.nets());
  t.update_discriminators(in);
  Digests after_d(t.nets());
  CHECK(after_d.g == before.g);
  CHECK(after_d.h == before.h);
  CHECK(after_d.dx != before.dx);
  CHECK(after_d.dy != before.dy);

  t.update_generator(in);
  Digests after_g(t.nets());
  CHECK(after_g.dx == after_d.dx);
  CHECK(after_g.dy == after_d.dy);
  CHECK(after_g.h == after_d.h);
  CHECK(after_g.g != after_d.g);

  t.update_regularizer(in);
  Digests after_h(t.nets());
  CHECK(after_h.g == after_g.g);
  CHECK(after_h.dx == after_g.dx);
  CHECK(after_h.dy == after_g.dy);
  CHECK(after_h.h != after_g.h);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  Fixture f;
  auto c = small_config();
  c.learning_rate = 0.0;
  Trainer t(c, f.ensemble, f.target);
  auto stream = data::make_pair_stream(f.sources, f.references, 5);
  Digests before(t.nets());
  const auto trace = t.train_step(stream.next_batch(4));
  Digests after(t.nets());
  CHECK(after.g == before.g);
  CHECK(after.dx == before.dx);
  CHECK(after.dy == before.dy);
  CHECK(after.h == before.h);
  CHECK(trace.step == 1);
}

TEST_CASE("trace totals are consistent with the weights") {
  Fixture f;
  Trainer t(small_config(), f.ensemble, f.target);
  auto stream = data::make_pair_stream(f.sources, f.references, 5);
  const auto tr = t.train_step(stream.next_batch(4));
  const auto expect = losses::totals(tr.report.terms, {});
  CHECK(tr.report.g_total == expect.g_total);
  CHECK(tr.report.h_total == expect.h_total);
  CHECK(tr.report.d_total == expect.d_total);
  CHECK(tr.wall_ms > 0.0);
}

TEST_CASE("without the regularizer, H is never updated and its terms stay zero") {
  Fixture f;
  auto c = small_config();
  c.use_regularizer = false;
  Trainer t(c, f.ensemble, f.target);
  auto stream = data::make_pair_stream(f.sources, f.references, 5);
  Digests before(t.nets());
  const auto tr = t.train_step(stream.next_batch(4));
  CHECK(Digests(t.nets()).h == before.h);
  CHECK(tr.report.terms.h_gan == 0.0);
  CHECK(tr.report.h_total == doctest::Approx(5.0 * tr.report.terms.idt));
}

TEST_CASE("two fresh trainers with one seed produce identical traces") {
  Fixture f;
  auto c = small_config();
  Trainer a(c, f.ensemble, f.target), b(c, f.ensemble, f.target);
  auto sa = data::make_pair_stream(f.sources, f.references, 5);
  auto sb = data::make_pair_stream(f.sources, f.references, 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(same_report(a.train_step(sa.next_batch(4)).report, b.train_step(sb.next_batch(4)).report));
  }
}

TEST_CASE("checkpoint round trip is byte-identical; truncation is detected") {
  Fixture f;
  const auto dir = testsupport::temp_dir("ckpt");
  auto req = request(f, small_config());
  req.config.max_steps = 2;
  req.run_dir = dir;
  const auto result = train(req);
  REQUIRE(fs::exists(result.last_checkpoint_path));
  const auto ck = load_checkpoint(result.last_checkpoint_path);
  CHECK(ck.step == 2);
  CHECK(ck.config_hash == "hash-a");
  CHECK(ck.rng_states.count("pairs") == 1);
  CHECK(ck.rng_states.count("trainer") == 1);
  save_checkpoint(ck, dir / "again.ckpt");
  const auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(read(dir / "again.ckpt") == read(result.last_checkpoint_path));
  CHECK(ck.tensors.contains("adam/g/" + std::string(nets::GeneratorImpl().named_parameters().begin()->key()) + "/m"));

  const auto bytes = read(result.last_checkpoint_path);
  {
    std::ofstream out(dir / "cut.ckpt", std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), IntegrityError);
  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x10;
  {
    std::ofstream out(dir / "flip.ckpt", std::ios::binary);
    out << flipped;
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "flip.ckpt"), IntegrityError);

  std::ifstream trace(dir / "trace.csv");
  std::string header;
  std::getline(trace, header);
  CHECK(header == "step,l_d,l_g_gan,l_g_reg,l_g_adv,l_g_make,l_idt,l_h_gan,l_h_adv,l_h_make,l_g_total,l_h_total,l_d_total,wall_ms");
  fs::remove_all(dir);
}

TEST_CASE("resume from a checkpoint matches the uninterrupted run") {
  Fixture f;
  const auto dir = testsupport::temp_dir("resume");
  auto c = small_config();
  c.max_steps = 8;

  auto full = request(f, c);
  const auto uninterrupted = train(full);

  auto first = request(f, c);
  first.run_dir = dir;
  first.stop_after = 3;
  const auto part = train(first);
  REQUIRE(part.trace.size() == 3);

  // s -> s + 5 from the checkpoint.
  auto second = request(f, c);
  second.run_dir = dir;
  second.resume_from = load_checkpoint(part.last_checkpoint_path);
  const auto rest = train(second);
  REQUIRE(rest.trace.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(rest.trace[i].step == i + 4);
    CHECK(max_diff(rest.trace[i].report, uninterrupted.trace[i + 3].report) <= 1e-5);
  }

  auto mismatch = request(f, c);
  mismatch.config_hash = "hash-b";
  mismatch.resume_from = load_checkpoint(part.last_checkpoint_path);
  CHECK_THROWS_AS(train(mismatch), ConfigError);
  mismatch.force = true;
  CHECK_NOTHROW(train(mismatch));
  fs::remove_all(dir);
}

TEST_CASE("non-finite losses abort with the last checkpoint named") {
  Fixture f;
  const auto dir = testsupport::temp_dir("diverge");
  auto c = small_config();
  c.max_steps = 2;
  auto req = request(f, c);
  req.run_dir = dir;
  for (auto& e : req.target.embeddings) e = torch::full_like(e, NAN);
  try {
    train(req);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("last checkpoint") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("total_steps") {
  TrainConfig c;
  c.batch_size = 8;
  c.epochs = 3;
  CHECK(total_steps(c, 64) == 24);
  CHECK(total_steps(c, 65) == 27);
  c.max_steps = 10;
  CHECK(total_steps(c, 64) == 10);
}

TEST_CASE("toy run: makeup and adversarial losses fall, everything finite") {
  // 64 sources (16 identities x 4) against two briefly trained recognizers.
  Fixture f;
  f.sources = std::make_shared<const data::FaceSet>(data::synth_faces(0, 16, 4, data::StyleDomain::kSource, 1, kRes));
  f.references = std::make_shared<const data::FaceSet>(data::synth_faces(0, 16, 4, data::StyleDomain::kReference, 2, kRes));
  const auto train_set = nets::LabeledImages::from_faces(data::synth_faces(200, 16, 6, data::StyleDomain::kSource, 5, kRes));
  const auto heldout = nets::LabeledImages::from_faces(data::synth_faces(300, 8, 4, data::StyleDomain::kSource, 6, kRes));
  nets::FrTrainOptions fo;
  fo.min_epochs = 15;
  fo.max_epochs = 15;
  fo.target_accuracy = 0.0;
  f.ensemble.clear();
  for (int k = 0; k < 2; ++k) {
    auto m = nets::train_toy_fr(train_set, heldout, k, 70 + k, fo);
    m->eval();
    for (auto& p : m->parameters()) p.requires_grad_(false);
    f.ensemble.push_back(nets::as_embed_fn(m));
  }
  Rng rng(3);
  f.target = data::TargetIdentity::make(data::synth_face(99, data::StyleDomain::kSource, rng, kRes).image, f.ensemble);
  auto c = small_config();
  c.max_steps = 200;
  auto req = request(f, c);
  const auto result = train(req);
  REQUIRE(result.trace.size() == 200);
  double make0 = 0, make1 = 0, adv0 = 0, adv1 = 0;
  for (int i = 0; i < 20; ++i) {
    make0 += result.trace[i].report.terms.g_make;
    adv0 += result.trace[i].report.terms.g_adv;
    make1 += result.trace[180 + i].report.terms.g_make;
    adv1 += result.trace[180 + i].report.terms.g_adv;
  }
  CHECK(make1 < make0);
  CHECK(adv1 < adv0);
  for (const auto& s : result.trace) {
    CHECK(std::isfinite(s.report.g_total));
    CHECK(std::isfinite(s.report.h_total));
    CHECK(std::isfinite(s.report.d_total));
  }
}
