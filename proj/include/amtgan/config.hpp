#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "amtgan/attacks.hpp"
#include "amtgan/toy_fr.hpp"
#include "amtgan/training.hpp"

namespace amtgan::config {

// Synthetic identity block: `count` identities from `first`, `per_identity` samples each.
struct IdentityRange {
  int first = 0;
  int count = 0;
  int per_identity = 1;
  std::uint64_t seed = 0;
};

struct DataSection {
  int resolution = 32;
  std::string source_dir;     // empty: synthetic sources
  std::string reference_dir;  // empty: synthetic references
  std::string test_dir;       // empty: synthetic test faces
  std::string target_image;   // empty: synthetic target identity
  IdentityRange train;        // GAN sources and references
  IdentityRange test;
  int target_identity = 2000;
};

struct FrSection {
  int models = 3;
  std::uint64_t seed = 5;
  IdentityRange train;
  int reference_per_identity = 4;  // extra made-up samples per training identity
  IdentityRange heldout;
  nets::FrTrainOptions options;
};

struct EvaluationSection {
  double far = 0.01;
  IdentityRange calibration;
  std::int64_t calibration_pairs = 100000;
};

struct RunConfig {
  nlohmann::json document;  // fully populated, canonical
  std::string hash;
  DataSection data;
  FrSection fr;
  training::TrainConfig training;
  attacks::AttackConfig attack;
  std::string attack_method = "none";
  EvaluationSection evaluation;
};

nlohmann::json default_document();

// Merges `document` onto the defaults. Unknown keys and type mismatches throw ConfigError.
RunConfig from_document(const nlohmann::json& document);

// Applies "a.b.c=value" overrides (value parsed as JSON, else taken as a string).
nlohmann::json apply_overrides(nlohmann::json document, const std::vector<std::string>& overrides);

// Reads a JSON config file; throws ConfigError if missing or malformed.
nlohmann::json read_document(const std::filesystem::path& path);

RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// SHA-256 of the canonical serialization (sorted keys, no whitespace).
std::string hash_document(const nlohmann::json& document);

}  // namespace amtgan::config
