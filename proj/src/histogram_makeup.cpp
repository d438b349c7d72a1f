#include "amtgan/histogram_makeup.hpp"

#include <algorithm>
#include <numeric>

#include "amtgan/error.hpp"

namespace amtgan::makeup {

namespace {

// Values of one channel at the masked pixels, in row-major order.
std::vector<float> masked_values(const Tensor& image, const Tensor& mask, int channel) {
  const auto img = image.detach().to(torch::kFloat32).contiguous();
  const auto m = mask.to(torch::kBool).contiguous();
  if (img.dim() != 3 || img.size(0) != 3 || m.dim() != 2 || img.size(1) != m.size(0) ||
      img.size(2) != m.size(1)) {
    throw ShapeError("histogram matching expects a [3, H, W] image and an [H, W] mask");
  }
  auto a = img.accessor<float, 3>();
  auto ma = m.accessor<bool, 2>();
  std::vector<float> out;
  for (int64_t i = 0; i < m.size(0); ++i) {
    for (int64_t j = 0; j < m.size(1); ++j) {
      if (ma[i][j]) out.push_back(a[channel][i][j]);
    }
  }
  return out;
}

// Pixel order sorted by value via bucket sort on the histogram: the cumulative
// histogram gives each bin's starting rank, then each bin is ordered by value
// with pixel index breaking ties.
std::vector<std::size_t> ranked_order(const std::vector<float>& values, int bins) {
  std::vector<std::int64_t> start(static_cast<std::size_t>(bins) + 1, 0);
  for (float v : values) ++start[static_cast<std::size_t>(bin_index(v, bins)) + 1];
  std::partial_sum(start.begin(), start.end(), start.begin());
  std::vector<std::size_t> order(values.size());
  std::vector<std::int64_t> cursor(start.begin(), start.end() - 1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    order[static_cast<std::size_t>(cursor[static_cast<std::size_t>(bin_index(values[i], bins))]++)] =
        i;
  }
  for (int b = 0; b < bins; ++b) {
    const auto first = order.begin() + start[static_cast<std::size_t>(b)];
    const auto last = order.begin() + start[static_cast<std::size_t>(b) + 1];
    if (last - first > 1) {
      std::sort(first, last, [&](std::size_t p, std::size_t q) {
        return values[p] < values[q] || (values[p] == values[q] && p < q);
      });
    }
  }
  return order;
}

void require_nonempty(const Tensor& mask, const char* what) {
  if (!mask.to(torch::kBool).any().item<bool>()) {
    throw DomainError(std::string("histogram matching: empty ") + what + " mask");
  }
}

}  // namespace

int bin_index(float value, int bins) {
  const double pos = (static_cast<double>(value) + 1.0) * 0.5 * bins;
  const auto b = static_cast<int>(std::floor(pos));
  return std::clamp(b, 0, bins - 1);
}

ChannelHistogram channel_histogram(const Tensor& image, const Tensor& mask, int channel,
                                   int bins) {
  if (bins < 1) throw DomainError("channel_histogram: bins must be positive");
  if (channel < 0 || channel > 2) throw DomainError("channel_histogram: channel out of range");
  const auto values = masked_values(image, mask, channel);
  if (values.empty()) throw DomainError("channel_histogram: empty mask");
  ChannelHistogram h;
  h.bin_counts.assign(static_cast<std::size_t>(bins), 0);
  for (float v : values) ++h.bin_counts[static_cast<std::size_t>(bin_index(v, bins))];
  h.mask_pixel_count = static_cast<std::int64_t>(values.size());
  return h;
}

Tensor match_region(const Tensor& source_image, const Tensor& source_mask,
                    const Tensor& reference_image, const Tensor& reference_mask, int bins) {
  require_nonempty(source_mask, "source");
  require_nonempty(reference_mask, "reference");
  Tensor out;
  for (int c = 0; c < 3; ++c) {
    const auto src = masked_values(source_image, source_mask, c);
    const auto ref = masked_values(reference_image, reference_mask, c);
    if (c == 0) out = torch::empty({3, static_cast<int64_t>(src.size())}, torch::kFloat32);
    const auto src_order = ranked_order(src, bins);
    const auto ref_order = ranked_order(ref, bins);
    const auto n = static_cast<std::int64_t>(src.size());
    const auto m = static_cast<std::int64_t>(ref.size());
    auto acc = out.accessor<float, 2>();
    for (std::int64_t r = 0; r < n; ++r) {
      // Midpoint of the source rank's CDF interval, located in the reference CDF.
      const std::int64_t q = (2 * r + 1) * m / (2 * n);
      acc[c][static_cast<int64_t>(src_order[static_cast<std::size_t>(r)])] =
          ref[ref_order[static_cast<std::size_t>(q)]];
    }
  }
  return out;
}

MatchedComposite histogram_match(const Tensor& x, const data::RegionMaskSet& masks_x,
                                 const Tensor& y, const data::RegionMaskSet& masks_y, int bins) {
  MatchedComposite out{x.detach().to(torch::kFloat32).clone().contiguous(), {}};
  const std::pair<Region, std::pair<const Tensor*, const Tensor*>> regions[] = {
      {Region::kLips, {&masks_x.lips, &masks_y.lips}},
      {Region::kEyes, {&masks_x.eyes, &masks_y.eyes}},
      {Region::kFace, {&masks_x.face, &masks_y.face}},
  };
  for (const auto& [region, masks] : regions) {
    const Tensor matched = match_region(x, *masks.first, y, *masks.second, bins);
    const auto mask = masks.first->to(torch::kBool).contiguous();
    auto ma = mask.accessor<bool, 2>();
    auto pa = out.pixels.accessor<float, 3>();
    auto va = matched.accessor<float, 2>();
    int64_t k = 0;
    for (int64_t i = 0; i < mask.size(0); ++i) {
      for (int64_t j = 0; j < mask.size(1); ++j) {
        if (!ma[i][j]) continue;
        for (int c = 0; c < 3; ++c) pa[c][i][j] = va[c][k];
        ++k;
      }
    }
    out.matched_regions.push_back(region);
  }
  return out;
}

Tensor histogram_match_batch(const Tensor& x, const std::vector<data::RegionMaskSet>& masks_x,
                             const Tensor& y, const std::vector<data::RegionMaskSet>& masks_y,
                             int bins) {
  const auto n = x.size(0);
  if (y.size(0) != n || static_cast<int64_t>(masks_x.size()) != n ||
      static_cast<int64_t>(masks_y.size()) != n) {
    throw ShapeError("histogram_match_batch: batch sizes differ");
  }
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int64_t b = 0; b < n; ++b) {
    out.push_back(histogram_match(x[b], masks_x[static_cast<std::size_t>(b)], y[b],
                                  masks_y[static_cast<std::size_t>(b)], bins)
                      .pixels);
  }
  return torch::stack(out).to(x.scalar_type());
}

}  // namespace amtgan::makeup
