#pragma once

#include <cstdint>
#include <vector>

#include "amtgan/data.hpp"

namespace amtgan::makeup {

inline constexpr int kDefaultBins = 256;

enum class Region { kLips, kEyes, kFace };

struct ChannelHistogram {
  std::vector<std::int64_t> bin_counts;
  std::int64_t mask_pixel_count = 0;
};

// Bin of a value in [-1, 1] under `bins` uniform bins; out-of-range values clamp.
int bin_index(float value, int bins);

// Histogram of one channel of a [3, H, W] image over the pixels where mask is set.
// Throws DomainError on an empty mask.
ChannelHistogram channel_histogram(const Tensor& image, const Tensor& mask, int channel,
                                   int bins = kDefaultBins);

// CDF matching of one masked region, all three channels. Returns the matched
// values of the source's masked pixels as [3, n] in row-major pixel order.
// Each source pixel takes the reference order statistic at its own CDF position,
// so rank order is preserved (ties broken by pixel index).
Tensor match_region(const Tensor& source_image, const Tensor& source_mask,
                    const Tensor& reference_image, const Tensor& reference_mask,
                    int bins = kDefaultBins);

struct MatchedComposite {
  Tensor pixels;  // [3, H, W]
  std::vector<Region> matched_regions;
};

// Region-wise histogram matching HM(x, y): lips, eyes and face of x are matched
// against the same regions of y; pixels outside all masks are copied from x.
MatchedComposite histogram_match(const Tensor& x, const data::RegionMaskSet& masks_x,
                                 const Tensor& y, const data::RegionMaskSet& masks_y,
                                 int bins = kDefaultBins);

// Batched HM over [B, 3, H, W] tensors, detached from any graph.
Tensor histogram_match_batch(const Tensor& x, const std::vector<data::RegionMaskSet>& masks_x,
                             const Tensor& y, const std::vector<data::RegionMaskSet>& masks_y,
                             int bins = kDefaultBins);

}  // namespace amtgan::makeup
