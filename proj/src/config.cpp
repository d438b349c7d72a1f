#include "amtgan/config.hpp"

#include <fstream>

#include "amtgan/digest.hpp"
#include "amtgan/error.hpp"

namespace amtgan::config {

using nlohmann::json;

json default_document() {
  const nets::FrTrainOptions fr;
  const training::TrainConfig tc;
  const attacks::AttackConfig ac;
  const diversity::DiversityConfig dc;
  const losses::LossWeights lw;
  return {
      {"data",
       {{"resolution", 32},
        {"source_dir", ""},
        {"reference_dir", ""},
        {"test_dir", ""},
        {"target_image", ""},
        {"train", {{"first", 1000}, {"count", 16}, {"per_identity", 4}, {"seed", 11}}},
        {"test", {{"first", 1100}, {"count", 16}, {"per_identity", 4}, {"seed", 23}}},
        {"target_identity", 2000}}},
      {"fr",
       {{"models", 3},
        {"seed", 5},
        {"train", {{"first", 0}, {"count", 32}, {"per_identity", 12}, {"seed", 41}}},
        {"reference_per_identity", 4},
        {"heldout", {{"first", 500}, {"count", 16}, {"per_identity", 6}, {"seed", 43}}},
        {"min_epochs", fr.min_epochs},
        {"max_epochs", fr.max_epochs},
        {"batch_size", fr.batch_size},
        {"learning_rate", fr.learning_rate},
        {"margin", fr.margin},
        {"scale", fr.scale},
        {"noise_sigma", fr.noise_sigma},
        {"target_accuracy", fr.target_accuracy}}},
      {"networks",
       {{"generator", {{"base_channels", tc.generator.base_channels},
                       {"residual_blocks", tc.generator.residual_blocks}}},
        {"discriminator", {{"base_channels", tc.discriminator.base_channels}}},
        {"regularizer", {{"channels", tc.regularizer.channels},
                         {"growth", tc.regularizer.growth},
                         {"rrdb_blocks", tc.regularizer.rrdb_blocks}}}}},
      {"diversity",
       {{"p", dc.p}, {"scale_low", dc.scale_low}, {"scale_high", dc.scale_high},
        {"noise_sigma", dc.noise_sigma}}},
      {"loss",
       {{"gan", lw.gan}, {"reg", lw.reg}, {"adv", lw.adv}, {"make", lw.make}, {"idt", lw.idt}}},
      {"training",
       {{"epochs", tc.epochs},
        {"max_steps", tc.max_steps},
        {"batch_size", tc.batch_size},
        {"learning_rate", tc.learning_rate},
        {"adam_beta1", tc.adam_beta1},
        {"adam_beta2", tc.adam_beta2},
        {"ensemble", tc.ensemble_ids},
        {"holdout", tc.holdout_id},
        {"seed", tc.seed},
        {"checkpoint_every", tc.checkpoint_every},
        {"use_regularizer", tc.use_regularizer}}},
      {"attack",
       {{"method", "none"},
        {"epsilon", ac.epsilon},
        {"step_size", ac.step_size},
        {"iterations", ac.iterations},
        {"momentum", ac.momentum},
        {"kernel_size", ac.kernel_size}}},
      {"evaluation",
       {{"far", 0.01},
        {"calibration", {{"first", 3000}, {"count", 100}, {"per_identity", 6}, {"seed", 31}}},
        {"calibration_pairs", 100000}}},
  };
}

namespace {

const char* kind(const json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

bool compatible(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    for (const auto& e : v) {
      if (!e.is_number_integer()) return false;
    }
    return true;
  }
  return false;
}

void merge(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + here + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge(slot, value, here);
    } else if (!compatible(slot, value)) {
      throw ConfigError("config key '" + here + "' expects " + kind(slot) + ", got " + kind(value));
    } else {
      slot = slot.is_number_float() ? json(value.get<double>()) : value;
    }
  }
}

IdentityRange range(const json& j) {
  return {j.at("first").get<int>(), j.at("count").get<int>(), j.at("per_identity").get<int>(),
          j.at("seed").get<std::uint64_t>()};
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

RunConfig from_document(const json& document) {
  json doc = default_document();
  merge(doc, document, "");

  RunConfig rc;
  const json& d = doc["data"];
  rc.data.resolution = d["resolution"].get<int>();
  rc.data.source_dir = d["source_dir"].get<std::string>();
  rc.data.reference_dir = d["reference_dir"].get<std::string>();
  rc.data.test_dir = d["test_dir"].get<std::string>();
  rc.data.target_image = d["target_image"].get<std::string>();
  rc.data.train = range(d["train"]);
  rc.data.test = range(d["test"]);
  rc.data.target_identity = d["target_identity"].get<int>();
  require(rc.data.resolution >= 16 && rc.data.resolution % 4 == 0,
          "data.resolution must be a multiple of 4 and >= 16");

  const json& f = doc["fr"];
  rc.fr.models = f["models"].get<int>();
  rc.fr.seed = f["seed"].get<std::uint64_t>();
  rc.fr.train = range(f["train"]);
  rc.fr.reference_per_identity = f["reference_per_identity"].get<int>();
  rc.fr.heldout = range(f["heldout"]);
  auto& fo = rc.fr.options;
  fo.min_epochs = f["min_epochs"].get<int>();
  fo.max_epochs = f["max_epochs"].get<int>();
  fo.batch_size = f["batch_size"].get<int>();
  fo.learning_rate = f["learning_rate"].get<double>();
  fo.margin = f["margin"].get<double>();
  fo.scale = f["scale"].get<double>();
  fo.noise_sigma = f["noise_sigma"].get<double>();
  fo.target_accuracy = f["target_accuracy"].get<double>();
  require(rc.fr.models >= 1, "fr.models must be >= 1");

  auto& t = rc.training;
  const json& n = doc["networks"];
  t.generator.base_channels = n["generator"]["base_channels"].get<int>();
  t.generator.residual_blocks = n["generator"]["residual_blocks"].get<int>();
  t.discriminator.base_channels = n["discriminator"]["base_channels"].get<int>();
  t.regularizer.channels = n["regularizer"]["channels"].get<int>();
  t.regularizer.growth = n["regularizer"]["growth"].get<int>();
  t.regularizer.rrdb_blocks = n["regularizer"]["rrdb_blocks"].get<int>();

  const json& dv = doc["diversity"];
  t.diversity.p = dv["p"].get<double>();
  t.diversity.scale_low = dv["scale_low"].get<double>();
  t.diversity.scale_high = dv["scale_high"].get<double>();
  t.diversity.noise_sigma = dv["noise_sigma"].get<double>();

  const json& l = doc["loss"];
  t.weights = {l["gan"].get<double>(), l["reg"].get<double>(), l["adv"].get<double>(),
               l["make"].get<double>(), l["idt"].get<double>()};

  const json& tr = doc["training"];
  t.epochs = tr["epochs"].get<int>();
  t.max_steps = tr["max_steps"].get<std::int64_t>();
  t.batch_size = tr["batch_size"].get<int>();
  t.learning_rate = tr["learning_rate"].get<double>();
  t.adam_beta1 = tr["adam_beta1"].get<double>();
  t.adam_beta2 = tr["adam_beta2"].get<double>();
  t.ensemble_ids = tr["ensemble"].get<std::vector<int>>();
  t.holdout_id = tr["holdout"].get<int>();
  t.seed = tr["seed"].get<std::uint64_t>();
  t.checkpoint_every = tr["checkpoint_every"].get<std::int64_t>();
  t.use_regularizer = tr["use_regularizer"].get<bool>();
  t.validate();
  for (int id : t.ensemble_ids) {
    require(id >= 0 && id < rc.fr.models, "training.ensemble names a model outside the zoo");
  }
  require(t.holdout_id >= 0 && t.holdout_id < rc.fr.models,
          "training.holdout names a model outside the zoo");

  const json& a = doc["attack"];
  rc.attack_method = a["method"].get<std::string>();
  attacks::parse_method(rc.attack_method);
  rc.attack.epsilon = a["epsilon"].get<double>();
  rc.attack.step_size = a["step_size"].get<double>();
  rc.attack.iterations = a["iterations"].get<int>();
  rc.attack.momentum = a["momentum"].get<double>();
  rc.attack.kernel_size = a["kernel_size"].get<int>();
  rc.attack.diversity = t.diversity;
  rc.attack.validate();

  const json& e = doc["evaluation"];
  rc.evaluation.far = e["far"].get<double>();
  rc.evaluation.calibration = range(e["calibration"]);
  rc.evaluation.calibration_pairs = e["calibration_pairs"].get<std::int64_t>();
  require(rc.evaluation.far >= 0.0 && rc.evaluation.far <= 1.0, "evaluation.far must lie in [0, 1]");

  for (const auto* r : {&rc.data.train, &rc.data.test, &rc.fr.train, &rc.fr.heldout,
                        &rc.evaluation.calibration}) {
    require(r->count >= 1 && r->per_identity >= 1, "identity ranges need count and per_identity >= 1");
  }

  rc.document = doc;
  rc.hash = hash_document(doc);
  return rc;
}

json apply_overrides(json document, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + item + "' is not of the form key.path=value");
    }
    const std::string path = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &document;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (key.empty()) throw ConfigError("override '" + item + "' has an empty key segment");
      if (!node->is_object()) *node = json::object();
      if (dot == std::string::npos) {
        (*node)[key] = value;
        break;
      }
      node = &(*node)[key];
      start = dot + 1;
    }
  }
  return document;
}

json read_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file '" + path.string() + "' is not valid JSON");
  if (!doc.is_object()) throw ConfigError("config file '" + path.string() + "' must hold an object");
  return doc;
}

RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  return from_document(apply_overrides(read_document(path), overrides));
}

std::string hash_document(const json& document) { return sha256_hex(document.dump()); }

}  // namespace amtgan::config
