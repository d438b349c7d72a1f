#include "amtgan/pipeline.hpp"

#include <cstdio>
#include <iostream>

#include "amtgan/archive.hpp"
#include "amtgan/error.hpp"

namespace amtgan::pipeline {

namespace fs = std::filesystem;

void freeze(torch::nn::Module& module) {
  for (auto& p : module.parameters()) p.requires_grad_(false);
  module.eval();
}

namespace {

data::FaceSet synth(const config::IdentityRange& r, data::StyleDomain domain, int resolution,
                    std::uint64_t salt = 0) {
  return data::synth_faces(r.first, r.count, r.per_identity, domain, r.seed + salt, resolution);
}

std::vector<std::string> synth_names(const data::FaceSet& faces, const char* tag) {
  std::vector<std::string> names;
  std::map<int, int> seen;
  for (const auto& f : faces) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%d_%s%02d", f.image.identity_id, tag, seen[f.image.identity_id]++);
    names.emplace_back(buf);
  }
  return names;
}

ImageSet from_dir(const std::string& dir, int resolution, data::StyleDomain domain) {
  auto loaded = data::load_images(dir, resolution, domain);
  ImageSet s;
  s.faces = std::move(loaded.faces);
  for (const auto& p : loaded.paths) s.names.push_back(p.stem().string());
  return s;
}

}  // namespace

Zoo train_zoo(const config::RunConfig& rc, bool verbose) {
  auto train = synth(rc.fr.train, data::StyleDomain::kSource, rc.data.resolution);
  config::IdentityRange made_up = rc.fr.train;
  made_up.per_identity = rc.fr.reference_per_identity;
  if (made_up.per_identity > 0) {
    auto extra = synth(made_up, data::StyleDomain::kReference, rc.data.resolution, 1);
    train.insert(train.end(), extra.begin(), extra.end());
  }
  auto held = synth(rc.fr.heldout, data::StyleDomain::kSource, rc.data.resolution);
  auto held_made_up = synth(rc.fr.heldout, data::StyleDomain::kReference, rc.data.resolution, 1);
  held.insert(held.end(), held_made_up.begin(), held_made_up.end());
  const auto train_set = nets::LabeledImages::from_faces(train);
  const auto held_set = nets::LabeledImages::from_faces(held);

  Zoo zoo;
  for (int k = 0; k < rc.fr.models; ++k) {
    ZooMember m;
    m.model_id = k;
    const std::uint64_t model_seed = rc.fr.seed * 1000003ULL + static_cast<std::uint64_t>(k) * 7919ULL;
    m.model = nets::train_toy_fr(train_set, held_set, k, model_seed, rc.fr.options, &m.report);
    freeze(*m.model);
    if (verbose) {
      const auto& a = m.model->arch();
      std::fprintf(stderr,
                   "fr model %d: width %d stages %d hidden %d, %lld params, held-out accuracy %.3f "
                   "after %d epochs\n",
                   k, a.width, a.stages, a.hidden, static_cast<long long>(m.model->parameter_count()),
                   m.report.heldout.accuracy, m.report.epochs);
    }
    zoo.push_back(std::move(m));
  }
  return zoo;
}

fs::path zoo_model_path(const fs::path& dir, int model_id) {
  return dir / ("model_" + std::to_string(model_id) + ".fr");
}

void save_zoo(const Zoo& zoo, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& m : zoo) {
    Archive a;
    const auto& arch = m.model->arch();
    a.meta = {{"kind", "amtgan-fr-model"},
              {"model_id", m.model_id},
              {"model_seed", arch.model_seed},
              {"width", arch.width},
              {"stages", arch.stages},
              {"hidden", arch.hidden},
              {"embedding_dim", arch.embedding_dim},
              {"heldout_accuracy", m.report.heldout.accuracy},
              {"heldout_threshold", m.report.heldout.threshold},
              {"epochs", m.report.epochs}};
    put_module(a, "net/", *m.model);
    save_archive(a, zoo_model_path(dir, m.model_id));
  }
}

bool zoo_complete(const fs::path& dir, int models) {
  for (int k = 0; k < models; ++k) {
    if (!fs::exists(zoo_model_path(dir, k))) return false;
  }
  return true;
}

Zoo load_zoo(const fs::path& dir, int models) {
  Zoo zoo;
  for (int k = 0; k < models; ++k) {
    const auto path = zoo_model_path(dir, k);
    if (!fs::exists(path)) throw ConfigError("FR model file missing: " + path.string());
    const Archive a = load_archive(path);
    ZooMember m;
    try {
      if (a.meta.at("kind").get<std::string>() != "amtgan-fr-model") {
        throw IntegrityError(path.string() + " is not an FR model file");
      }
      nets::EmbedderArch arch;
      arch.model_id = a.meta.at("model_id").get<int>();
      arch.model_seed = a.meta.at("model_seed").get<std::uint64_t>();
      arch.width = a.meta.at("width").get<int>();
      arch.stages = a.meta.at("stages").get<int>();
      arch.hidden = a.meta.at("hidden").get<int>();
      arch.embedding_dim = a.meta.at("embedding_dim").get<int>();
      m.model_id = arch.model_id;
      m.model = nets::FrEmbedder(arch);
      m.report.heldout.accuracy = a.meta.at("heldout_accuracy").get<double>();
      m.report.heldout.threshold = a.meta.at("heldout_threshold").get<double>();
      m.report.epochs = a.meta.at("epochs").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw IntegrityError(path.string() + ": malformed header: " + e.what());
    }
    get_module(a, "net/", *m.model);
    freeze(*m.model);
    zoo.push_back(std::move(m));
  }
  return zoo;
}

const ZooMember& member(const Zoo& zoo, int model_id) {
  for (const auto& m : zoo) {
    if (m.model_id == model_id) return m;
  }
  throw ConfigError("no FR model with id " + std::to_string(model_id));
}

std::vector<ImageFn> embed_fns(const Zoo& zoo, const std::vector<int>& ids) {
  std::vector<ImageFn> out;
  for (int id : ids) out.push_back(nets::as_embed_fn(member(zoo, id).model));
  return out;
}

ImageSet training_sources(const config::RunConfig& rc) {
  if (!rc.data.source_dir.empty()) return from_dir(rc.data.source_dir, rc.data.resolution, data::StyleDomain::kSource);
  ImageSet s;
  s.faces = synth(rc.data.train, data::StyleDomain::kSource, rc.data.resolution);
  s.names = synth_names(s.faces, "src");
  return s;
}

ImageSet training_references(const config::RunConfig& rc) {
  if (!rc.data.reference_dir.empty()) {
    return from_dir(rc.data.reference_dir, rc.data.resolution, data::StyleDomain::kReference);
  }
  ImageSet s;
  s.faces = synth(rc.data.train, data::StyleDomain::kReference, rc.data.resolution, 1);
  s.names = synth_names(s.faces, "ref");
  return s;
}

ImageSet test_sources(const config::RunConfig& rc) {
  if (!rc.data.test_dir.empty()) return from_dir(rc.data.test_dir, rc.data.resolution, data::StyleDomain::kSource);
  ImageSet s;
  s.faces = synth(rc.data.test, data::StyleDomain::kSource, rc.data.resolution);
  s.names = synth_names(s.faces, "test");
  return s;
}

ImageSet test_references(const config::RunConfig& rc) {
  ImageSet s;
  s.faces = synth(rc.data.test, data::StyleDomain::kReference, rc.data.resolution, 1);
  s.names = synth_names(s.faces, "ref");
  return s;
}

data::FaceImage target_face(const config::RunConfig& rc) {
  if (!rc.data.target_image.empty()) {
    return {data::read_image(rc.data.target_image, rc.data.resolution), rc.data.target_identity,
            data::StyleDomain::kSource};
  }
  Rng rng(rc.data.train.seed * 31 + 17);
  return data::synth_face(rc.data.target_identity, data::StyleDomain::kSource, rng, rc.data.resolution).image;
}

std::vector<double> calibration_negatives(const nets::FrEmbedder& model, const config::IdentityRange& range,
                                          int resolution, std::size_t max_pairs, std::uint64_t seed) {
  auto faces = synth(range, data::StyleDomain::kSource, resolution);
  auto made_up = synth(range, data::StyleDomain::kReference, resolution, 1);
  faces.insert(faces.end(), made_up.begin(), made_up.end());
  const auto set = nets::LabeledImages::from_faces(faces);
  Tensor emb;
  {
    torch::NoGradGuard no_grad;
    nets::FrEmbedder m = model;
    std::vector<Tensor> parts;
    for (int64_t i = 0; i < set.images.size(0); i += 128) {
      parts.push_back(m->forward(set.images.slice(0, i, std::min(set.images.size(0), i + 128))));
    }
    emb = torch::cat(parts);
  }
  const auto all = eval::negative_pair_similarities(emb, set.labels);
  Rng rng(seed);
  return eval::subsample(all, max_pairs, rng);
}

std::vector<eval::VerificationThreshold> calibrate(const Zoo& zoo, const config::RunConfig& rc) {
  std::vector<eval::VerificationThreshold> out;
  for (const auto& m : zoo) {
    const auto neg = calibration_negatives(m.model, rc.evaluation.calibration, rc.data.resolution,
                                           static_cast<std::size_t>(rc.evaluation.calibration_pairs),
                                           rc.evaluation.calibration.seed + static_cast<std::uint64_t>(m.model_id));
    out.push_back(eval::calibrate_threshold(m.model_id, neg, rc.evaluation.far));
  }
  return out;
}

training::TrainRequest make_train_request(const config::RunConfig& rc, const Zoo& zoo) {
  training::TrainRequest req;
  req.config = rc.training;
  req.run_config = rc.document;
  req.config_hash = rc.hash;
  req.sources = std::make_shared<const data::FaceSet>(training_sources(rc).faces);
  req.references = std::make_shared<const data::FaceSet>(training_references(rc).faces);
  req.ensemble = embed_fns(zoo, rc.training.ensemble_ids);
  req.target = data::TargetIdentity::make(target_face(rc), req.ensemble);
  return req;
}

nets::Generator generator_from(const training::Checkpoint& checkpoint) {
  const auto rc = config::from_document(checkpoint.config);
  nets::Generator g(rc.training.generator);
  get_module(checkpoint.tensors, "net/g/", *g);
  freeze(*g);
  return g;
}

Tensor protect(nets::Generator& g, const Tensor& sources, const Tensor& references) {
  if (references.size(0) == 0) throw DomainError("protect needs at least one reference image");
  torch::NoGradGuard no_grad;
  const int64_t n = sources.size(0);
  const Tensor idx = torch::arange(n, torch::kInt64).remainder(references.size(0));
  const Tensor refs = references.index_select(0, idx);
  std::vector<Tensor> parts;
  for (int64_t i = 0; i < n; i += 32) {
    const int64_t e = std::min(n, i + 32);
    parts.push_back(g->forward(sources.slice(0, i, e), refs.slice(0, i, e)));
  }
  return torch::cat(parts);
}

eval::MetricsReport evaluate_images(const config::RunConfig& rc, const Zoo& zoo,
                                    const std::vector<eval::VerificationThreshold>& thresholds,
                                    const ImageSet& clean, const Tensor& protected_images,
                                    const std::string& method) {
  eval::EvalInputs in;
  in.config_hash = rc.hash;
  in.method = method;
  in.names = clean.names;
  in.clean = data::stack_pixels(clean.faces);
  in.protected_ = protected_images;
  in.reference_style = data::stack_pixels(test_references(rc).faces);
  nets::FrEmbedder holdout = member(zoo, rc.training.holdout_id).model;
  in.fid_features = [holdout](const Tensor& x) mutable { return holdout->features(x); };
  const auto z = target_face(rc).pixels.unsqueeze(0);
  for (const auto& t : thresholds) {
    const auto& m = member(zoo, t.model_id);
    eval::ModelUnderTest mu;
    mu.model_id = t.model_id;
    mu.role = t.model_id == rc.training.holdout_id ? "holdout" : "ensemble";
    const auto& ids = rc.training.ensemble_ids;
    if (mu.role != "holdout" && std::find(ids.begin(), ids.end(), t.model_id) == ids.end()) mu.role = "unused";
    mu.embed = nets::as_embed_fn(m.model);
    {
      torch::NoGradGuard no_grad;
      mu.target_embedding = mu.embed(z);
    }
    mu.tau = t.tau;
    in.models.push_back(std::move(mu));
  }
  return eval::evaluate(in);
}

}  // namespace amtgan::pipeline
