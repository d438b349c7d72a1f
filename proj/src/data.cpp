#include "amtgan/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <iostream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "amtgan/error.hpp"

namespace amtgan::data {

namespace {

using Rgb = std::array<float, 3>;

struct Ellipse {
  double cx, cy, rx, ry;

  double level(double u, double v) const {
    const double du = (u - cx) / rx;
    const double dv = (v - cy) / ry;
    return du * du + dv * dv;
  }
  bool contains(double u, double v) const { return level(u, v) <= 1.0; }
};

// Everything about a face that is fixed by its identity.
struct IdentityTraits {
  double face_cx, face_cy, face_rx, face_ry;
  double eye_y, eye_dx, eye_rx, eye_ry;
  double mouth_y, mouth_rx, mouth_ry;
  double nose_len, nose_w;
  double brow_gap, brow_tilt;
  double hairline;
  Rgb skin;
  Rgb hair;
  Rgb iris;
  double tex_freq_a, tex_angle_a, tex_phase_a, tex_amp_a;
  double tex_freq_b, tex_angle_b, tex_phase_b, tex_amp_b;
};

IdentityTraits identity_traits(int identity_id) {
  // Identity parameters are a pure function of the id, independent of any stream.
  Rng r(0x9e3779b97f4a7c15ULL ^ (static_cast<std::uint64_t>(identity_id) * 0xbf58476d1ce4e5b9ULL));
  IdentityTraits t{};
  t.face_cx = 0.5 + r.uniform(-0.03, 0.03);
  t.face_cy = 0.54 + r.uniform(-0.03, 0.03);
  t.face_rx = r.uniform(0.28, 0.38);
  t.face_ry = r.uniform(0.34, 0.44);
  t.eye_y = r.uniform(0.37, 0.47);
  t.eye_dx = r.uniform(0.11, 0.17);
  t.eye_rx = r.uniform(0.05, 0.075);
  t.eye_ry = r.uniform(0.03, 0.045);
  t.mouth_y = r.uniform(0.68, 0.77);
  t.mouth_rx = r.uniform(0.07, 0.14);
  t.mouth_ry = r.uniform(0.03, 0.05);
  t.nose_len = r.uniform(0.08, 0.15);
  t.nose_w = r.uniform(0.02, 0.045);
  t.brow_gap = r.uniform(0.05, 0.08);
  t.brow_tilt = r.uniform(-0.5, 0.5);
  t.hairline = r.uniform(0.12, 0.30);
  const double tone = r.uniform(0.0, 1.0);
  t.skin = {static_cast<float>(0.86 - 0.25 * tone), static_cast<float>(0.70 - 0.25 * tone),
            static_cast<float>(0.60 - 0.25 * tone)};
  const double hair_tone = r.uniform(0.0, 1.0);
  const double hair_warm = r.uniform(0.0, 1.0);
  t.hair = {static_cast<float>(0.08 + 0.6 * hair_tone * (0.6 + 0.4 * hair_warm)),
            static_cast<float>(0.06 + 0.45 * hair_tone),
            static_cast<float>(0.05 + 0.3 * hair_tone * (1.0 - 0.5 * hair_warm))};
  t.iris = {static_cast<float>(r.uniform(0.1, 0.5)), static_cast<float>(r.uniform(0.1, 0.5)),
            static_cast<float>(r.uniform(0.1, 0.6))};
  t.tex_freq_a = r.uniform(3.0, 8.0);
  t.tex_angle_a = r.uniform(0.0, M_PI);
  t.tex_phase_a = r.uniform(0.0, 2 * M_PI);
  t.tex_amp_a = r.uniform(0.03, 0.07);
  t.tex_freq_b = r.uniform(6.0, 12.0);
  t.tex_angle_b = r.uniform(0.0, M_PI);
  t.tex_phase_b = r.uniform(0.0, 2 * M_PI);
  t.tex_amp_b = r.uniform(0.02, 0.05);
  return t;
}

// Per-sample makeup palette.
struct Palette {
  Rgb lips;
  Rgb shadow;  // eye-region color outside the eyeball; nullopt-like when bare
  bool has_shadow = false;
  Rgb foundation{1.0f, 1.0f, 1.0f};
  float blush = 0.0f;
};

Rgb jitter(const Rgb& c, Rng& r, double amount) {
  Rgb out{};
  for (int i = 0; i < 3; ++i) {
    out[i] = static_cast<float>(std::clamp(c[i] + r.uniform(-amount, amount), 0.0, 1.0));
  }
  return out;
}

Palette draw_palette(const IdentityTraits& t, StyleDomain domain, Rng& r) {
  Palette p;
  if (domain == StyleDomain::kSource) {
    p.lips = jitter({t.skin[0] * 0.95f + 0.04f, t.skin[1] * 0.72f, t.skin[2] * 0.72f}, r, 0.03);
    p.has_shadow = false;
    return p;
  }
  static constexpr std::array<Rgb, 6> kLipsticks{{{0.72f, 0.08f, 0.12f},
                                                   {0.92f, 0.42f, 0.58f},
                                                   {0.95f, 0.45f, 0.35f},
                                                   {0.48f, 0.12f, 0.32f},
                                                   {0.62f, 0.36f, 0.30f},
                                                   {0.85f, 0.15f, 0.35f}}};
  static constexpr std::array<Rgb, 6> kShadows{{{0.42f, 0.28f, 0.20f},
                                                 {0.45f, 0.25f, 0.55f},
                                                 {0.25f, 0.35f, 0.62f},
                                                 {0.78f, 0.62f, 0.28f},
                                                 {0.35f, 0.35f, 0.38f},
                                                 {0.60f, 0.30f, 0.35f}}};
  p.lips = jitter(kLipsticks[static_cast<std::size_t>(r.below(kLipsticks.size()))], r, 0.05);
  p.shadow = jitter(kShadows[static_cast<std::size_t>(r.below(kShadows.size()))], r, 0.05);
  p.has_shadow = true;
  for (auto& f : p.foundation) f = static_cast<float>(r.uniform(0.93, 1.07));
  p.blush = static_cast<float>(r.uniform(0.0, 0.12));
  return p;
}

float lerp(float a, float b, double w) { return static_cast<float>(a + (b - a) * w); }

}  // namespace

bool RegionMaskSet::disjoint() const {
  const auto overlap = (lips & eyes) | (lips & face) | (eyes & face);
  return !overlap.any().item<bool>();
}

bool RegionMaskSet::nonempty() const {
  return lips.any().item<bool>() && eyes.any().item<bool>() && face.any().item<bool>();
}

Tensor normalize_8bit(std::span<const std::uint8_t> rgb, int height, int width) {
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3) {
    throw ShapeError("normalize_8bit: buffer size does not match height x width x 3");
  }
  auto out = torch::empty({3, height, width}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      for (int c = 0; c < 3; ++c) {
        const auto v = rgb[(static_cast<std::size_t>(i) * width + j) * 3 + c];
        acc[c][i][j] = static_cast<float>(v) / 127.5f - 1.0f;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> denormalize_8bit(const Tensor& pixels) {
  const auto p = pixels.detach().to(torch::kFloat32).contiguous();
  if (p.dim() != 3 || p.size(0) != 3) throw ShapeError("denormalize_8bit expects [3, H, W]");
  const auto h = p.size(1);
  const auto w = p.size(2);
  auto acc = p.accessor<float, 3>();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h * w * 3));
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::round((static_cast<double>(acc[c][i][j]) + 1.0) * 127.5);
        out[static_cast<std::size_t>((i * w + j) * 3 + c)] =
            static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return out;
}

namespace {

cv::Mat decode_rgb(const std::filesystem::path& path, int resolution) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ConfigError("cannot decode image: " + path.string());
  if (bgr.rows != resolution || bgr.cols != resolution) {
    const int interp = (bgr.rows > resolution) ? cv::INTER_AREA : cv::INTER_LINEAR;
    cv::resize(bgr, bgr, cv::Size(resolution, resolution), 0, 0, interp);
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb.isContinuous() ? rgb : rgb.clone();
}

bool is_mask_sidecar(const std::filesystem::path& p) {
  const auto name = p.filename().string();
  return name.size() > 9 && name.ends_with(".mask.png");
}

int parse_identity(const std::filesystem::path& p) {
  const auto stem = p.stem().string();
  const auto sep = stem.find('_');
  if (sep == std::string::npos || sep == 0) return -1;
  int id = -1;
  const auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + sep, id);
  return (ec == std::errc() && ptr == stem.data() + sep) ? id : -1;
}

}  // namespace

Tensor read_image(const std::filesystem::path& path, int resolution) {
  const cv::Mat rgb = decode_rgb(path, resolution);
  return normalize_8bit({rgb.data, rgb.total() * 3}, rgb.rows, rgb.cols);
}

std::pair<int, int> image_size(const std::filesystem::path& path) {
  const cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw ConfigError("cannot decode image: " + path.string());
  return {img.rows, img.cols};
}

void write_png(const Tensor& pixels, const std::filesystem::path& path, int out_height,
               int out_width) {
  auto bytes = denormalize_8bit(pixels);
  const int h = static_cast<int>(pixels.size(1));
  const int w = static_cast<int>(pixels.size(2));
  cv::Mat rgb(h, w, CV_8UC3, bytes.data());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (out_height > 0 && out_width > 0 && (out_height != h || out_width != w)) {
    cv::resize(bgr, bgr, cv::Size(out_width, out_height), 0, 0, cv::INTER_LINEAR);
  }
  if (!cv::imwrite(path.string(), bgr)) throw IoError("cannot write " + path.string());
}

RegionMaskSet read_mask_sidecar(const std::filesystem::path& path, int resolution) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ConfigError("cannot decode mask sidecar: " + path.string());
  if (bgr.rows != resolution || bgr.cols != resolution) {
    cv::resize(bgr, bgr, cv::Size(resolution, resolution), 0, 0, cv::INTER_NEAREST);
  }
  RegionMaskSet m{torch::zeros({resolution, resolution}, torch::kBool),
                  torch::zeros({resolution, resolution}, torch::kBool),
                  torch::zeros({resolution, resolution}, torch::kBool)};
  auto lips = m.lips.accessor<bool, 2>();
  auto eyes = m.eyes.accessor<bool, 2>();
  auto face = m.face.accessor<bool, 2>();
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      const auto px = bgr.at<cv::Vec3b>(i, j);
      // Priority lips > eyes > face keeps the regions disjoint.
      if (px[2] >= 128) {
        lips[i][j] = true;
      } else if (px[1] >= 128) {
        eyes[i][j] = true;
      } else if (px[0] >= 128) {
        face[i][j] = true;
      }
    }
  }
  return m;
}

namespace {

struct Geometry {
  Ellipse face, mouth, eye_l, eye_r, shadow_l, shadow_r;
};

Geometry layout(const IdentityTraits& t, double dx, double dy, double scale) {
  Geometry g{};
  const auto sx = [&](double v) { return t.face_cx + dx + (v - t.face_cx) * scale; };
  const auto sy = [&](double v) { return t.face_cy + dy + (v - t.face_cy) * scale; };
  g.face = {sx(t.face_cx), sy(t.face_cy), t.face_rx * scale, t.face_ry * scale};
  g.mouth = {sx(0.5), sy(t.mouth_y), t.mouth_rx * scale, t.mouth_ry * scale};
  g.eye_l = {sx(0.5 - t.eye_dx), sy(t.eye_y), t.eye_rx * scale, t.eye_ry * scale};
  g.eye_r = {sx(0.5 + t.eye_dx), sy(t.eye_y), t.eye_rx * scale, t.eye_ry * scale};
  g.shadow_l = {g.eye_l.cx, g.eye_l.cy - 0.006, g.eye_l.rx * 1.55, g.eye_l.ry * 2.1};
  g.shadow_r = {g.eye_r.cx, g.eye_r.cy - 0.006, g.eye_r.rx * 1.55, g.eye_r.ry * 2.1};
  return g;
}

RegionMaskSet masks_for(const Geometry& g, int resolution) {
  RegionMaskSet m{torch::zeros({resolution, resolution}, torch::kBool),
                  torch::zeros({resolution, resolution}, torch::kBool),
                  torch::zeros({resolution, resolution}, torch::kBool)};
  auto lips = m.lips.accessor<bool, 2>();
  auto eyes = m.eyes.accessor<bool, 2>();
  auto face = m.face.accessor<bool, 2>();
  for (int i = 0; i < resolution; ++i) {
    const double v = (i + 0.5) / resolution;
    for (int j = 0; j < resolution; ++j) {
      const double u = (j + 0.5) / resolution;
      if (g.mouth.contains(u, v)) {
        lips[i][j] = true;
      } else if (g.shadow_l.contains(u, v) || g.shadow_r.contains(u, v)) {
        eyes[i][j] = true;
      } else if (g.face.contains(u, v)) {
        face[i][j] = true;
      }
    }
  }
  // At very low resolution a small region can miss every pixel centre; it then
  // claims the pixel under its own centre.
  const auto claim = [&](const Tensor& mine, const Ellipse& e) {
    if (mine.any().item<bool>()) return;
    const int i = std::clamp(static_cast<int>(e.cy * resolution), 0, resolution - 1);
    const int j = std::clamp(static_cast<int>(e.cx * resolution), 0, resolution - 1);
    for (Tensor* t : {&m.lips, &m.eyes, &m.face}) (*t)[i][j] = t->is_same(mine);
  };
  claim(m.lips, g.mouth);
  claim(m.eyes, g.shadow_l);
  claim(m.face, g.face);
  return m;
}

}  // namespace

RegionMaskSet default_masks(int resolution) {
  IdentityTraits mean{};
  mean.face_cx = 0.5;
  mean.face_cy = 0.54;
  mean.face_rx = 0.33;
  mean.face_ry = 0.39;
  mean.eye_y = 0.42;
  mean.eye_dx = 0.14;
  mean.eye_rx = 0.0625;
  mean.eye_ry = 0.0375;
  mean.mouth_y = 0.725;
  mean.mouth_rx = 0.105;
  mean.mouth_ry = 0.04;
  return masks_for(layout(mean, 0.0, 0.0, 1.0), resolution);
}

LoadedImages load_images(const std::filesystem::path& directory, int resolution,
                         StyleDomain domain) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) {
    throw ConfigError("image directory not found: " + directory.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && !is_mask_sidecar(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  LoadedImages out;
  for (const auto& file : files) {
    Tensor pixels;
    try {
      pixels = read_image(file, resolution);
    } catch (const ConfigError&) {
      out.warnings.push_back("skipping undecodable file " + file.string());
      std::cerr << "warning: " << out.warnings.back() << "\n";
      continue;
    }
    auto sidecar = file;
    sidecar.replace_extension();
    sidecar += ".mask.png";
    RegionMaskSet masks =
        fs::exists(sidecar) ? read_mask_sidecar(sidecar, resolution) : default_masks(resolution);
    out.faces.push_back({FaceImage{pixels, parse_identity(file), domain}, std::move(masks)});
    out.paths.push_back(file);
  }
  if (out.faces.empty()) {
    throw ConfigError("no decodable images in " + directory.string());
  }
  return out;
}

Face synth_face(int identity_id, StyleDomain domain, Rng& rng, int resolution) {
  const IdentityTraits t = identity_traits(identity_id);

  // Sample-level jitter: small translation/scale, lighting, palette, sensor noise.
  const double dx = rng.uniform(-0.015, 0.015);
  const double dy = rng.uniform(-0.015, 0.015);
  const double scale = rng.uniform(0.97, 1.03);
  const double brightness = rng.uniform(-0.05, 0.05);
  const double light_angle = rng.uniform(0.0, 2 * M_PI);
  const double light_strength = rng.uniform(0.0, 0.06);
  const Rgb background = {static_cast<float>(rng.uniform(0.2, 0.9)),
                          static_cast<float>(rng.uniform(0.2, 0.9)),
                          static_cast<float>(rng.uniform(0.2, 0.9))};
  const Palette pal = draw_palette(t, domain, rng);
  const std::uint64_t noise_seed = rng.fork_seed();

  const Geometry g = layout(t, dx, dy, scale);
  const double nose_top = g.eye_l.cy + 0.04 * scale;
  const double nose_bottom = nose_top + t.nose_len * scale;
  const double nose_cx = g.mouth.cx;
  const double brow_y = g.eye_l.cy - t.brow_gap * scale - g.eye_l.ry;
  const double hair_y = g.face.cy - g.face.ry + t.hairline * g.face.ry;

  Rgb skin = t.skin;
  for (int c = 0; c < 3; ++c) skin[c] *= pal.foundation[c];

  auto pixels = torch::empty({3, resolution, resolution}, torch::kFloat32);
  auto acc = pixels.accessor<float, 3>();
  const double lx = std::cos(light_angle);
  const double ly = std::sin(light_angle);

  for (int i = 0; i < resolution; ++i) {
    const double v = (i + 0.5) / resolution;
    for (int j = 0; j < resolution; ++j) {
      const double u = (j + 0.5) / resolution;
      Rgb c = background;
      const bool in_face = g.face.contains(u, v);
      // Hair: a cap above the hairline, slightly wider than the face.
      const Ellipse hair_cap{g.face.cx, g.face.cy, g.face.rx * 1.12, g.face.ry * 1.1};
      if (hair_cap.contains(u, v) && v < hair_y) c = t.hair;
      if (in_face && v >= hair_y) {
        const double pa = (u * std::cos(t.tex_angle_a) + v * std::sin(t.tex_angle_a));
        const double pb = (u * std::cos(t.tex_angle_b) + v * std::sin(t.tex_angle_b));
        const double tex = t.tex_amp_a * std::sin(2 * M_PI * t.tex_freq_a * pa + t.tex_phase_a) +
                           t.tex_amp_b * std::sin(2 * M_PI * t.tex_freq_b * pb + t.tex_phase_b);
        for (int k = 0; k < 3; ++k) c[k] = static_cast<float>(skin[k] + tex);
        // Cheek blush for made-up faces.
        const Ellipse cheek_l{g.eye_l.cx, g.mouth.cy - 0.08, 0.07, 0.05};
        const Ellipse cheek_r{g.eye_r.cx, g.mouth.cy - 0.08, 0.07, 0.05};
        if (pal.blush > 0 && (cheek_l.contains(u, v) || cheek_r.contains(u, v))) {
          c[0] = lerp(c[0], 0.95f, pal.blush);
          c[1] = lerp(c[1], 0.45f, pal.blush);
          c[2] = lerp(c[2], 0.5f, pal.blush);
        }
        // Nose shadow.
        if (v > nose_top && v < nose_bottom && std::abs(u - nose_cx) < t.nose_w * scale) {
          for (auto& ch : c) ch *= 0.85f;
        }
        // Brows: tilted bars above each eye.
        for (const Ellipse* eye : {&g.eye_l, &g.eye_r}) {
          const double side = (eye == &g.eye_l) ? -1.0 : 1.0;
          const double by = brow_y + side * t.brow_tilt * (u - eye->cx) * 0.3;
          if (std::abs(u - eye->cx) < eye->rx * 1.3 && std::abs(v - by) < 0.014 * scale + 0.004) {
            c = {t.hair[0] * 0.9f, t.hair[1] * 0.9f, t.hair[2] * 0.9f};
          }
        }
      }
      if (g.shadow_l.contains(u, v) || g.shadow_r.contains(u, v)) {
        if (pal.has_shadow) c = pal.shadow;
        const Ellipse* eye = g.shadow_l.contains(u, v) ? &g.eye_l : &g.eye_r;
        if (eye->contains(u, v)) {
          c = {0.92f, 0.92f, 0.9f};
          const Ellipse iris{eye->cx, eye->cy, eye->ry * 0.9, eye->ry * 0.9};
          if (iris.contains(u, v)) c = t.iris;
          const Ellipse pupil{eye->cx, eye->cy, eye->ry * 0.35, eye->ry * 0.35};
          if (pupil.contains(u, v)) c = {0.05f, 0.05f, 0.05f};
        }
      }
      if (g.mouth.contains(u, v)) {
        c = pal.lips;
        // Darker parting line through the middle of the mouth.
        if (std::abs(v - g.mouth.cy) < g.mouth.ry * 0.18) {
          for (auto& ch : c) ch *= 0.6f;
        }
      }
      const double light = brightness + light_strength * ((u - 0.5) * lx + (v - 0.5) * ly);
      for (int k = 0; k < 3; ++k) acc[k][i][j] = static_cast<float>(c[k] + light);
    }
  }

  auto gen = at::make_generator<at::CPUGeneratorImpl>(noise_seed);
  pixels = pixels + 0.015f * torch::randn({3, resolution, resolution}, gen);
  pixels = (pixels * 2.0f - 1.0f).clamp(-1.0f, 1.0f);

  return {FaceImage{pixels, identity_id, domain}, masks_for(g, resolution)};
}

FaceSet synth_faces(int first_identity, int count, int per_identity, StyleDomain domain,
                    std::uint64_t seed, int resolution) {
  Rng rng(seed);
  FaceSet out;
  out.reserve(static_cast<std::size_t>(count) * per_identity);
  for (int k = 0; k < per_identity; ++k) {
    for (int id = first_identity; id < first_identity + count; ++id) {
      out.push_back(synth_face(id, domain, rng, resolution));
    }
  }
  return out;
}

PairStream::PairStream(std::shared_ptr<const FaceSet> sources,
                       std::shared_ptr<const FaceSet> references, std::uint64_t seed)
    : sources_(std::move(sources)), references_(std::move(references)), rng_(seed) {
  if (!sources_ || sources_->empty()) throw ConfigError("pair stream: empty source list");
  if (!references_ || references_->empty()) throw ConfigError("pair stream: empty reference list");
}

PairStream::Pair PairStream::next() {
  Pair p;
  p.source = static_cast<std::size_t>(rng_.below(static_cast<std::int64_t>(sources_->size())));
  p.reference =
      static_cast<std::size_t>(rng_.below(static_cast<std::int64_t>(references_->size())));
  return p;
}

PairBatch PairStream::next_batch(int batch_size) {
  PairBatch b;
  std::vector<Tensor> xs;
  std::vector<Tensor> ys;
  for (int i = 0; i < batch_size; ++i) {
    const Pair p = next();
    const Face& x = (*sources_)[p.source];
    const Face& y = (*references_)[p.reference];
    xs.push_back(x.image.pixels);
    ys.push_back(y.image.pixels);
    b.masks_x.push_back(x.masks);
    b.masks_y.push_back(y.masks);
  }
  b.x = torch::stack(xs);
  b.y = torch::stack(ys);
  return b;
}

PairStream make_pair_stream(std::shared_ptr<const FaceSet> sources,
                            std::shared_ptr<const FaceSet> references, std::uint64_t seed) {
  return PairStream(std::move(sources), std::move(references), seed);
}

Tensor stack_pixels(std::span<const Face> faces) {
  std::vector<Tensor> px;
  px.reserve(faces.size());
  for (const auto& f : faces) px.push_back(f.image.pixels);
  return torch::stack(px);
}

TargetIdentity TargetIdentity::make(FaceImage z, std::span<const ImageFn> models) {
  TargetIdentity t{std::move(z), {}};
  torch::NoGradGuard no_grad;
  const auto batch = t.z.pixels.unsqueeze(0);
  for (const auto& m : models) t.embeddings.push_back(m(batch).detach());
  return t;
}

}  // namespace amtgan::data
