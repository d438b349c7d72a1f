#include "amtgan/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "amtgan/attacks.hpp"
#include "amtgan/config.hpp"
#include "amtgan/error.hpp"
#include "amtgan/evaluation.hpp"
#include "amtgan/pipeline.hpp"
#include "amtgan/training.hpp"

namespace amtgan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path run_root() {
  const char* env = std::getenv("AMTGAN_RUN_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

void write_json(const json& doc, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json manifest(const config::RunConfig& rc, const std::string& command) {
  return {{"tool", "amtgan"},
          {"tool_version", kToolVersion},
          {"command", command},
          {"config", rc.document},
          {"config_hash", rc.hash},
          {"seed", rc.training.seed},
          {"threads", torch::get_num_threads()}};
}

pipeline::Zoo obtain_zoo(const config::RunConfig& rc, const fs::path& dir, std::ostream& err) {
  if (pipeline::zoo_complete(dir, rc.fr.models)) return pipeline::load_zoo(dir, rc.fr.models);
  err << "training " << rc.fr.models << " toy FR models into " << dir.string() << '\n';
  auto zoo = pipeline::train_zoo(rc);
  pipeline::save_zoo(zoo, dir);
  return zoo;
}

struct TrainArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_name;
  std::string run_dir;
  std::string zoo_dir;
  std::string resume;
  bool force = false;
  std::int64_t stop_after = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const auto rc = config::load(a.config_path, a.overrides);
  fs::path dir = a.run_dir.empty()
                     ? run_root() / (a.run_name.empty() ? "run-" + rc.hash.substr(0, 12) : a.run_name)
                     : fs::path(a.run_dir);
  fs::create_directories(dir);
  write_json(manifest(rc, "train"), dir / "manifest.json");

  const fs::path zoo_dir = a.zoo_dir.empty() ? dir / "zoo" : fs::path(a.zoo_dir);
  const auto zoo = obtain_zoo(rc, zoo_dir, err);
  const auto thresholds = pipeline::calibrate(zoo, rc);
  eval::save_thresholds(thresholds, dir / "thresholds.json");

  auto req = pipeline::make_train_request(rc, zoo);
  req.run_dir = dir;
  req.force = a.force;
  req.stop_after = a.stop_after;
  if (!a.resume.empty()) req.resume_from = training::load_checkpoint(a.resume);
  const auto result = training::train(req);
  json summary = {{"run_dir", dir.string()},
                  {"config_hash", rc.hash},
                  {"steps", result.final_checkpoint.step},
                  {"checkpoint", result.last_checkpoint_path.string()},
                  {"zoo", zoo_dir.string()}};
  if (!result.trace.empty()) {
    const auto& last = result.trace.back().report;
    summary["last"] = {{"l_d_total", last.d_total}, {"l_g_total", last.g_total}, {"l_h_total", last.h_total}};
  }
  out << summary.dump() << '\n';
  return kOk;
}

fs::path default_zoo_for(const fs::path& checkpoint) {
  return checkpoint.parent_path().parent_path() / "zoo";
}

struct ProtectArgs {
  std::string checkpoint;
  std::string sources;
  std::string reference;
  std::string out_dir;
  std::string zoo_dir;
};

int cmd_protect(const ProtectArgs& a, std::ostream& out, std::ostream& err) {
  if (!fs::exists(a.checkpoint)) throw ConfigError("checkpoint not found: " + a.checkpoint);
  const auto ck = training::load_checkpoint(a.checkpoint);
  const auto rc = config::from_document(ck.config);
  auto g = pipeline::generator_from(ck);
  const fs::path zoo_dir = a.zoo_dir.empty() ? default_zoo_for(a.checkpoint) : fs::path(a.zoo_dir);
  const auto zoo = pipeline::load_zoo(zoo_dir, rc.fr.models);
  const auto ensemble = pipeline::embed_fns(zoo, rc.training.ensemble_ids);
  const auto target = data::TargetIdentity::make(pipeline::target_face(rc), ensemble);

  const auto loaded = data::load_images(a.sources, rc.data.resolution, data::StyleDomain::kSource);
  const Tensor reference = data::read_image(a.reference, rc.data.resolution).unsqueeze(0);
  const Tensor protected_images = pipeline::protect(g, data::stack_pixels(loaded.faces), reference);

  fs::create_directories(a.out_dir);
  json images = json::array();
  for (std::size_t i = 0; i < loaded.faces.size(); ++i) {
    const auto& src = loaded.paths[i];
    const auto [h, w] = data::image_size(src);
    const fs::path dest = fs::path(a.out_dir) / (src.stem().string() + ".png");
    const Tensor img = protected_images[static_cast<int64_t>(i)];
    data::write_png(img, dest, h, w);
    json sims = json::object();
    for (std::size_t k = 0; k < ensemble.size(); ++k) {
      const auto s = eval::target_similarities(ensemble[k], img.unsqueeze(0), target.embeddings[k]);
      sims[std::to_string(rc.training.ensemble_ids[k])] = s.front();
    }
    images.push_back({{"source", src.filename().string()}, {"output", dest.filename().string()},
                      {"similarity_to_target", sims}});
  }
  write_json({{"checkpoint", fs::path(a.checkpoint).filename().string()},
              {"config_hash", rc.hash},
              {"step", ck.step},
              {"target_identity", rc.data.target_identity},
              {"images", images}},
             fs::path(a.out_dir) / "similarities.json");
  out << "protected " << loaded.faces.size() << " images into " << a.out_dir << '\n';
  return kOk;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string attack;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string zoo_dir;
  std::string thresholds;
  std::string test_dir;
  std::optional<double> far;
  std::string out;
  std::string csv;
  std::string plot;
  std::optional<double> eps, eps_8bit, alpha, mu;
  std::optional<int> steps, kernel;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  if (a.checkpoint.empty() == a.attack.empty()) {
    throw ConfigError("evaluate needs exactly one of --checkpoint or --attack");
  }
  std::optional<training::Checkpoint> ck;
  json doc;
  if (!a.checkpoint.empty()) {
    if (!fs::exists(a.checkpoint)) throw ConfigError("checkpoint not found: " + a.checkpoint);
    ck = training::load_checkpoint(a.checkpoint);
    doc = ck->config;
  } else {
    if (a.config_path.empty()) throw ConfigError("--attack requires --config");
    doc = config::read_document(a.config_path);
  }
  std::vector<std::string> ov = a.overrides;
  if (!a.test_dir.empty()) ov.push_back("data.test_dir=" + json(a.test_dir).dump());
  if (a.far) ov.push_back("evaluation.far=" + json(*a.far).dump());
  if (!a.attack.empty()) {
    ov.push_back("attack.method=" + json(a.attack).dump());
    if (a.eps && a.eps_8bit) throw ConfigError("give either --eps or --eps-8bit, not both");
    if (a.eps) ov.push_back("attack.epsilon=" + json(*a.eps).dump());
    if (a.eps_8bit) ov.push_back("attack.epsilon=" + json(attacks::epsilon_from_8bit(*a.eps_8bit)).dump());
    if (a.alpha) ov.push_back("attack.step_size=" + json(*a.alpha).dump());
    if (a.steps) ov.push_back("attack.iterations=" + json(*a.steps).dump());
    if (a.mu) ov.push_back("attack.momentum=" + json(*a.mu).dump());
    if (a.kernel) ov.push_back("attack.kernel_size=" + json(*a.kernel).dump());
  }
  const auto rc = config::from_document(config::apply_overrides(doc, ov));

  fs::path zoo_dir = a.zoo_dir;
  if (zoo_dir.empty()) {
    if (!ck) throw ConfigError("--attack requires --zoo");
    zoo_dir = default_zoo_for(a.checkpoint);
  }
  const auto zoo = pipeline::load_zoo(zoo_dir, rc.fr.models);
  std::vector<eval::VerificationThreshold> thresholds;
  if (!a.thresholds.empty()) {
    thresholds = eval::load_thresholds(a.thresholds);
  } else {
    err << "calibrating thresholds at FAR " << rc.evaluation.far << '\n';
    thresholds = pipeline::calibrate(zoo, rc);
  }

  const auto test = pipeline::test_sources(rc);
  const Tensor clean = data::stack_pixels(test.faces);
  Tensor protected_images;
  std::string method;
  if (ck) {
    auto g = pipeline::generator_from(*ck);
    protected_images = pipeline::protect(g, clean, data::stack_pixels(pipeline::test_references(rc).faces));
    method = "amtgan";
  } else {
    const auto m = attacks::parse_method(rc.attack_method);
    const auto surrogates = pipeline::embed_fns(zoo, rc.training.ensemble_ids);
    const auto target = data::TargetIdentity::make(pipeline::target_face(rc), surrogates);
    Rng rng(rc.training.seed * 6364136223846793005ULL + 1442695040888963407ULL);
    protected_images = attacks::run(m, clean, target.embeddings, surrogates, rc.attack, rng);
    method = attacks::method_name(m);
  }
  const auto report = pipeline::evaluate_images(rc, zoo, thresholds, test, protected_images, method);
  const fs::path json_path = a.out;
  const fs::path csv_path = a.csv.empty() ? fs::path(a.out).replace_extension(".csv") : fs::path(a.csv);
  if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
  eval::write_report(report, json_path, csv_path);
  if (!a.plot.empty()) eval::plot_asr(report, a.plot);
  out << eval::report_json(report).dump() << '\n';
  return kOk;
}

struct CalibrateArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string zoo_dir;
  std::vector<int> models;
  std::optional<double> far;
  std::optional<std::int64_t> pairs;
  std::string out;
};

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out, std::ostream&) {
  json doc = a.config_path.empty() ? json::object() : config::read_document(a.config_path);
  std::vector<std::string> ov = a.overrides;
  if (a.far) ov.push_back("evaluation.far=" + json(*a.far).dump());
  if (a.pairs) ov.push_back("evaluation.calibration_pairs=" + json(*a.pairs).dump());
  const auto rc = config::from_document(config::apply_overrides(doc, ov));
  auto zoo = pipeline::load_zoo(a.zoo_dir, rc.fr.models);
  if (!a.models.empty()) {
    pipeline::Zoo chosen;
    for (int id : a.models) chosen.push_back(pipeline::member(zoo, id));
    zoo = std::move(chosen);
  }
  const auto thresholds = pipeline::calibrate(zoo, rc);
  const fs::path path = a.out;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  eval::save_thresholds(thresholds, path);
  out << eval::thresholds_json(thresholds).dump() << '\n';
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"AMT-GAN style adversarial makeup transfer at desk scale", "amtgan"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  int threads = 1;
  app.add_option("--threads", threads, "intra-op CPU threads (1 keeps runs bit-reproducible)")
      ->check(CLI::PositiveNumber);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train the generator, discriminators and regularizer");
  train->add_option("--config", ta.config_path, "JSON run config")->required();
  train->add_option("--override", ta.overrides, "key.path=value, repeatable");
  train->add_option("--run-name", ta.run_name, "directory name under $AMTGAN_RUN_ROOT");
  train->add_option("--run-dir", ta.run_dir, "explicit run directory");
  train->add_option("--zoo", ta.zoo_dir, "FR model directory (trained there if incomplete)");
  train->add_option("--resume", ta.resume, "checkpoint to resume from");
  train->add_flag("--force", ta.force, "resume even if the config hash differs");
  train->add_option("--stop-after", ta.stop_after, "stop at this global step");

  ProtectArgs pa;
  auto* protect = app.add_subcommand("protect", "apply a trained generator to a directory of faces");
  protect->add_option("--checkpoint", pa.checkpoint)->required();
  protect->add_option("--sources", pa.sources, "directory of source faces")->required();
  protect->add_option("--reference", pa.reference, "makeup reference image")->required();
  protect->add_option("--out", pa.out_dir, "output directory")->required();
  protect->add_option("--zoo", pa.zoo_dir, "FR model directory (default: the checkpoint's run)");

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "ASR / FID / PSNR / SSIM report");
  evaluate->add_option("--checkpoint", ea.checkpoint, "evaluate a trained generator");
  evaluate->add_option("--attack", ea.attack, "evaluate a baseline attack instead")
      ->check(CLI::IsMember({"none", "pgd", "mifgsm", "tidim"}));
  evaluate->add_option("--config", ea.config_path, "JSON run config (with --attack)");
  evaluate->add_option("--override", ea.overrides, "key.path=value, repeatable");
  evaluate->add_option("--zoo", ea.zoo_dir, "FR model directory");
  evaluate->add_option("--thresholds", ea.thresholds, "thresholds file from `calibrate`");
  evaluate->add_option("--test-dir", ea.test_dir, "directory of test faces");
  evaluate->add_option("--far", ea.far, "false accept rate for fresh calibration");
  evaluate->add_option("--out", ea.out, "report JSON path")->required();
  evaluate->add_option("--csv", ea.csv, "per-image CSV path (default: next to the JSON)");
  evaluate->add_option("--plot", ea.plot, "write an ASR bar chart PNG");
  evaluate->add_option("--eps", ea.eps, "L-inf budget in [-1, 1] units");
  evaluate->add_option("--eps-8bit", ea.eps_8bit, "L-inf budget in 8-bit levels");
  evaluate->add_option("--alpha", ea.alpha, "step size");
  evaluate->add_option("--steps", ea.steps, "iterations");
  evaluate->add_option("--mu", ea.mu, "momentum decay");
  evaluate->add_option("--kernel", ea.kernel, "translation-invariance kernel size (odd)");

  CalibrateArgs ca;
  auto* calibrate = app.add_subcommand("calibrate", "FAR thresholds for each FR model");
  calibrate->add_option("--config", ca.config_path, "JSON run config");
  calibrate->add_option("--override", ca.overrides, "key.path=value, repeatable");
  calibrate->add_option("--zoo", ca.zoo_dir, "FR model directory")->required();
  calibrate->add_option("--models", ca.models, "model ids (default: all)")->delimiter(',');
  calibrate->add_option("--far", ca.far, "target false accept rate");
  calibrate->add_option("--pairs", ca.pairs, "number of negative pairs");
  calibrate->add_option("--out", ca.out, "thresholds JSON path")->required();

  CLI::App* active = &app;
  try {
    app.parse(argc, argv);
    torch::set_num_threads(threads);
    if (train->parsed()) {
      active = train;
      return cmd_train(ta, out, err);
    }
    if (protect->parsed()) {
      active = protect;
      return cmd_protect(pa, out, err);
    }
    if (evaluate->parsed()) {
      active = evaluate;
      return cmd_evaluate(ea, out, err);
    }
    active = calibrate;
    return cmd_calibrate(ca, out, err);
  } catch (const CLI::CallForHelp&) {
    for (auto* sub : app.get_subcommands()) active = sub;
    out << active->help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    for (auto* sub : app.get_subcommands()) active = sub;
    err << "error: " << e.what() << "\n\n" << active->help();
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n\n" << active->help();
    return kConfigError;
  } catch (const IntegrityError& e) {
    err << "integrity error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DomainError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kConfigError;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace amtgan::cli
