#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "amtgan/types.hpp"

namespace amtgan {

// Container file of named float32 blocks plus a JSON header.
//
//   bytes 0..7    magic "AMTGAN01"
//   bytes 8..15   header length L, little-endian uint64
//   next L bytes  UTF-8 JSON: {"meta": ..., "blocks": [{name, shape, offset, count}],
//                              "payload_bytes": N, "payload_sha256": hex}
//   next N bytes  little-endian float32 values of every block, in order
//
// Encoding is deterministic, so save -> load -> save is byte-identical.
struct TensorBlock {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> values;
};

struct Archive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<TensorBlock> blocks;

  void put(const std::string& name, const Tensor& tensor);
  bool contains(const std::string& name) const;
  // Throws IntegrityError if absent.
  Tensor get(const std::string& name) const;
};

std::string encode_archive(const Archive& archive);
// Throws IntegrityError on bad magic, malformed header, size or checksum mismatch.
Archive decode_archive(const std::string& bytes);

// Writes through a temporary file and renames; throws IoError on failure and
// leaves no partial file behind.
void save_archive(const Archive& archive, const std::filesystem::path& path);
Archive load_archive(const std::filesystem::path& path);

// Copies a module's named parameters into / out of an archive under a prefix.
void put_module(Archive& archive, const std::string& prefix, const torch::nn::Module& module);
void get_module(const Archive& archive, const std::string& prefix, torch::nn::Module& module);

}  // namespace amtgan
