#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "amtgan/rng.hpp"
#include "amtgan/types.hpp"

namespace amtgan::data {

enum class StyleDomain { kSource, kReference };

struct FaceImage {
  Tensor pixels;  // float32 [3, H, W], values in [-1, 1]
  int identity_id = -1;
  StyleDomain domain = StyleDomain::kSource;
};

// Binary region masks, each bool [H, W]. Regions are pairwise disjoint.
struct RegionMaskSet {
  Tensor lips;
  Tensor eyes;
  Tensor face;

  bool disjoint() const;
  bool nonempty() const;
};

struct Face {
  FaceImage image;
  RegionMaskSet masks;
};

using FaceSet = std::vector<Face>;

// Maps interleaved 8-bit RGB to [3, H, W] in [-1, 1] (v / 127.5 - 1).
Tensor normalize_8bit(std::span<const std::uint8_t> rgb, int height, int width);

// Inverse of normalize_8bit with rounding; returns interleaved RGB.
std::vector<std::uint8_t> denormalize_8bit(const Tensor& pixels);

// Reads an image file, resizes to resolution x resolution, maps to [-1, 1].
// Throws ConfigError if the file cannot be decoded.
Tensor read_image(const std::filesystem::path& path, int resolution);

// (height, width) of an image file as stored. Throws ConfigError if undecodable.
std::pair<int, int> image_size(const std::filesystem::path& path);

// Writes a [3, H, W] tensor in [-1, 1] as an 8-bit PNG, optionally resized.
void write_png(const Tensor& pixels, const std::filesystem::path& path, int out_height = 0,
               int out_width = 0);

// Reads a `<image>.mask.png` sidecar: R = lips, G = eyes, B = face.
RegionMaskSet read_mask_sidecar(const std::filesystem::path& path, int resolution);

// Fixed-geometry masks of an average synthetic face, used for images with no sidecar.
RegionMaskSet default_masks(int resolution);

struct LoadedImages {
  FaceSet faces;
  std::vector<std::filesystem::path> paths;
  std::vector<std::string> warnings;
};

// Loads every decodable image in a directory (sorted by name). Files that fail to
// decode are skipped with a warning. Masks come from sidecars when present.
// A leading "<integer>_" in the file name is taken as the identity label.
LoadedImages load_images(const std::filesystem::path& directory, int resolution,
                         StyleDomain domain = StyleDomain::kSource);

// Procedural face. Identity fixes geometry, hair and skin texture; the domain
// selects the palette (bare vs. made-up); rng adds pose, lighting and noise jitter.
Face synth_face(int identity_id, StyleDomain domain, Rng& rng, int resolution);

// `per_identity` faces for each identity in [first_identity, first_identity + count).
FaceSet synth_faces(int first_identity, int count, int per_identity, StyleDomain domain,
                    std::uint64_t seed, int resolution);

struct PairBatch {
  Tensor x;  // [B, 3, H, W], domain X
  Tensor y;  // [B, 3, H, W], domain Y
  std::vector<RegionMaskSet> masks_x;
  std::vector<RegionMaskSet> masks_y;
};

// Reproducible uniform sampler over (source, reference) pairs.
class PairStream {
 public:
  struct Pair {
    std::size_t source = 0;
    std::size_t reference = 0;
  };

  PairStream(std::shared_ptr<const FaceSet> sources, std::shared_ptr<const FaceSet> references,
             std::uint64_t seed);

  Pair next();
  PairBatch next_batch(int batch_size);

  const FaceSet& sources() const { return *sources_; }
  const FaceSet& references() const { return *references_; }

  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }

 private:
  std::shared_ptr<const FaceSet> sources_;
  std::shared_ptr<const FaceSet> references_;
  Rng rng_;
};

// Throws ConfigError when either list is empty.
PairStream make_pair_stream(std::shared_ptr<const FaceSet> sources,
                            std::shared_ptr<const FaceSet> references, std::uint64_t seed);

// Stacks face pixels into a [N, 3, H, W] batch.
Tensor stack_pixels(std::span<const Face> faces);

// Target face z with its embedding under each surrogate, cached once.
struct TargetIdentity {
  FaceImage z;
  std::vector<Tensor> embeddings;  // one [1, d] row per model, detached

  static TargetIdentity make(FaceImage z, std::span<const ImageFn> models);
};

}  // namespace amtgan::data
