#include "derm/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "derm/error.hpp"

namespace derm {

void AugmentationConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (p < 0.0 || p > 1.0) throw ConfigError(std::string("augment: ") + name + " must be in [0,1]");
  };
  prob(hflip_prob, "hflip_prob");
  prob(vflip_prob, "vflip_prob");
  prob(grayscale_prob, "grayscale_prob");
  prob(blur_prob, "blur_prob");
  if (crop_scale_lo > crop_scale_hi || crop_scale_lo <= 0.0 || crop_scale_hi > 1.0)
    throw ConfigError("augment: crop_scale interval invalid");
  if (crop_aspect_lo > crop_aspect_hi || crop_aspect_lo <= 0.0)
    throw ConfigError("augment: crop_aspect interval invalid");
  if (jitter_lo > jitter_hi || jitter_lo < 0.0) throw ConfigError("augment: jitter interval invalid");
  if (blur_sigma_lo > blur_sigma_hi || blur_sigma_lo <= 0.0)
    throw ConfigError("augment: blur_sigma interval invalid");
  if (blur_kernel % 2 == 0 || blur_kernel == 0) throw ConfigError("augment: blur_kernel must be odd");
  if (rotation_degrees < 0.0) throw ConfigError("augment: rotation_degrees must be nonnegative");
  if (output_size == 0) throw ConfigError("augment: output_size must be positive");
}

// ------------------------------------------------------------------ PPM

namespace {

// Skips whitespace and '#' comments between header tokens.
std::size_t next_token(const std::vector<std::uint8_t>& b, std::size_t pos, std::string& token) {
  while (pos < b.size()) {
    if (std::isspace(b[pos])) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  token.clear();
  while (pos < b.size() && !std::isspace(b[pos])) token.push_back(static_cast<char>(b[pos++]));
  return pos;
}

}  // namespace

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::string tok;
  std::size_t pos = next_token(bytes, 0, tok);
  if (tok != "P6") throw IoError("decode_ppm: unsupported format magic '" + tok + "', need binary P6");
  pos = next_token(bytes, pos, tok);
  const long w = tok.empty() ? -1 : std::strtol(tok.c_str(), nullptr, 10);
  pos = next_token(bytes, pos, tok);
  const long h = tok.empty() ? -1 : std::strtol(tok.c_str(), nullptr, 10);
  pos = next_token(bytes, pos, tok);
  const long maxval = tok.empty() ? -1 : std::strtol(tok.c_str(), nullptr, 10);
  if (w <= 0 || h <= 0) throw IoError("decode_ppm: invalid dimensions");
  if (maxval != 255) throw IoError("decode_ppm: maxval must be 255, got " + tok);
  pos += 1;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (pos + need > bytes.size())
    throw IoError("decode_ppm: truncated payload, need " + std::to_string(need) + " bytes");
  Image img(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  for (std::size_t i = 0; i < need; ++i) img.pixels[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.pixels.size());
  for (float v : img.pixels) {
    const float c = std::min(1.0f, std::max(0.0f, v));
    out.push_back(static_cast<std::uint8_t>(std::lround(c * 255.0f)));
  }
  return out;
}

Image read_ppm_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_ppm_file(const std::string& path, const Image& img) {
  auto bytes = encode_ppm(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write image file: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write on image file: " + path);
}

// --------------------------------------------------------------- resize

namespace {

// Bilinear sample with clamped integer coordinates; exact pass-through on
// integral source positions.
float sample_bilinear(const Image& img, double sy, double sx, std::size_t c) {
  sy = std::min(std::max(sy, 0.0), static_cast<double>(img.height - 1));
  sx = std::min(std::max(sx, 0.0), static_cast<double>(img.width - 1));
  const std::size_t y0 = static_cast<std::size_t>(sy);
  const std::size_t x0 = static_cast<std::size_t>(sx);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const float fy = static_cast<float>(sy - static_cast<double>(y0));
  const float fx = static_cast<float>(sx - static_cast<double>(x0));
  const float top = img.at(y0, x0, c) + fx * (img.at(y0, x1, c) - img.at(y0, x0, c));
  const float bot = img.at(y1, x0, c) + fx * (img.at(y1, x1, c) - img.at(y1, x0, c));
  return top + fy * (bot - top);
}

Image resize_region(const Image& img, double src_y, double src_x, double src_h, double src_w,
                    std::size_t out_h, std::size_t out_w) {
  Image out(out_h, out_w);
  const double sy = src_h / static_cast<double>(out_h);
  const double sx = src_w / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x) {
      const double py = src_y + (static_cast<double>(y) + 0.5) * sy - 0.5;
      const double px = src_x + (static_cast<double>(x) + 0.5) * sx - 0.5;
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = sample_bilinear(img, py, px, c);
    }
  return out;
}

}  // namespace

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (img.height == 0 || img.width == 0) throw IoError("resize_bilinear: empty input");
  if (out_h == 0 || out_w == 0) throw ConfigError("resize_bilinear: zero target size");
  if (out_h == img.height && out_w == img.width) return img;
  return resize_region(img, 0.0, 0.0, static_cast<double>(img.height),
                       static_cast<double>(img.width), out_h, out_w);
}

// ------------------------------------------------------------ transforms

Image hflip(const Image& img) {
  Image out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

Image vflip(const Image& img) {
  Image out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(img.height - 1 - y, x, c);
  return out;
}

Image rotate_bilinear(const Image& img, double degrees) {
  if (degrees == 0.0) return img;
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  Image out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      // Inverse rotation from destination into source coordinates.
      const double sy = cy + dy * cs - dx * sn;
      const double sx = cx + dy * sn + dx * cs;
      if (sy < 0.0 || sy > static_cast<double>(img.height - 1) || sx < 0.0 ||
          sx > static_cast<double>(img.width - 1))
        continue;  // zero fill
      for (std::size_t c = 0; c < 3; ++c)
        out.at(y, x, c) = sample_bilinear(img, sy, sx, c);
    }
  return out;
}

namespace {

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

float luma(const Image& img, std::size_t y, std::size_t x) {
  return 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) + 0.114f * img.at(y, x, 2);
}

}  // namespace

Image adjust_brightness(const Image& img, double factor) {
  Image out = img;
  const float f = static_cast<float>(factor);
  for (auto& v : out.pixels) v = clamp01(v * f);
  return out;
}

Image adjust_contrast(const Image& img, double factor) {
  double mean = 0.0;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) mean += luma(img, y, x);
  mean /= static_cast<double>(img.height * img.width);
  Image out = img;
  const float f = static_cast<float>(factor), m = static_cast<float>(mean);
  for (auto& v : out.pixels) v = clamp01(m + (v - m) * f);
  return out;
}

Image adjust_saturation(const Image& img, double factor) {
  Image out(img.height, img.width);
  const float f = static_cast<float>(factor);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const float l = luma(img, y, x);
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = clamp01(l + (img.at(y, x, c) - l) * f);
    }
  return out;
}

Image to_grayscale(const Image& img) {
  Image out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const float l = luma(img, y, x);
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = l;
    }
  return out;
}

Image gaussian_blur(const Image& img, std::size_t kernel, double sigma) {
  if (kernel % 2 == 0 || kernel == 0) throw ConfigError("gaussian_blur: kernel must be odd");
  const long r = static_cast<long>(kernel / 2);
  std::vector<float> k(kernel);
  double sum = 0.0;
  for (long i = -r; i <= r; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + r)] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);

  // Symmetric reflection at the borders.
  auto mirror = [](long i, long n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return static_cast<std::size_t>(std::min(std::max(i, 0L), n - 1));
  };

  const long h = static_cast<long>(img.height), w = static_cast<long>(img.width);
  Image tmp(img.height, img.width), out(img.height, img.width);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        float acc = 0.0f;
        for (long i = -r; i <= r; ++i)
          acc += k[static_cast<std::size_t>(i + r)] *
                 img.at(static_cast<std::size_t>(y), mirror(x + i, w), c);
        tmp.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = acc;
      }
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        float acc = 0.0f;
        for (long i = -r; i <= r; ++i)
          acc += k[static_cast<std::size_t>(i + r)] *
                 tmp.at(mirror(y + i, h), static_cast<std::size_t>(x), c);
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = acc;
      }
  return out;
}

Image random_resized_crop(const Image& img, const AugmentationConfig& cfg, Rng& rng) {
  const double area = static_cast<double>(img.height * img.width);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target_area = area * rng.uniform(cfg.crop_scale_lo, cfg.crop_scale_hi);
    const double aspect = rng.uniform(cfg.crop_aspect_lo, cfg.crop_aspect_hi);
    const double cw = std::sqrt(target_area * aspect);
    const double ch = std::sqrt(target_area / aspect);
    if (cw < 1.0 || ch < 1.0 || cw > static_cast<double>(img.width) ||
        ch > static_cast<double>(img.height))
      continue;
    const double y0 = rng.uniform(0.0, static_cast<double>(img.height) - ch);
    const double x0 = rng.uniform(0.0, static_cast<double>(img.width) - cw);
    return resize_region(img, y0, x0, ch, cw, cfg.output_size, cfg.output_size);
  }
  // Fallback: centered square crop of the short side.
  const double side = static_cast<double>(std::min(img.height, img.width));
  const double y0 = (static_cast<double>(img.height) - side) / 2.0;
  const double x0 = (static_cast<double>(img.width) - side) / 2.0;
  return resize_region(img, y0, x0, side, side, cfg.output_size, cfg.output_size);
}

Image augment(const Image& img, const AugmentationConfig& cfg, std::uint64_t global_seed,
              std::uint64_t epoch, std::uint64_t sample_index) {
  if (img.height < 2 || img.width < 2) throw IoError("augment: input must be at least 2x2");
  cfg.validate();
  Rng rng(mix_seed(global_seed, epoch, sample_index));
  Image out = random_resized_crop(img, cfg, rng);
  out = rotate_bilinear(out, rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees));
  if (rng.uniform() < cfg.hflip_prob) out = hflip(out);
  if (rng.uniform() < cfg.vflip_prob) out = vflip(out);
  out = adjust_brightness(out, rng.uniform(cfg.jitter_lo, cfg.jitter_hi));
  out = adjust_contrast(out, rng.uniform(cfg.jitter_lo, cfg.jitter_hi));
  out = adjust_saturation(out, rng.uniform(cfg.jitter_lo, cfg.jitter_hi));
  if (rng.uniform() < cfg.grayscale_prob) out = to_grayscale(out);
  if (rng.uniform() < cfg.blur_prob)
    out = gaussian_blur(out, cfg.blur_kernel, rng.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi));
  // Interpolation and blur weights round off by an ulp; pin the contract.
  for (auto& p : out.pixels) p = std::min(1.0f, std::max(0.0f, p));
  return out;
}

Tensor<real> normalize(const Image& img, const NormalizationStats& stats) {
  for (double s : stats.std)
    if (!(s > 0.0)) throw ConfigError("normalize: std components must be strictly positive");
  Tensor<real> t({3, img.height, img.width});
  for (std::size_t c = 0; c < 3; ++c) {
    const double mu = stats.mean[c], sd = stats.std[c];
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        t.data[(c * img.height + y) * img.width + x] =
            static_cast<real>((static_cast<double>(img.at(y, x, c)) - mu) / sd);
  }
  return t;
}

Image denormalize(const Tensor<real>& chw, const NormalizationStats& stats) {
  if (chw.rank() != 3 || chw.shape[0] != 3)
    throw ShapeError("denormalize: expected [3,H,W], got " + shape_str(chw.shape));
  const std::size_t h = chw.shape[1], w = chw.shape[2];
  Image img(h, w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        img.at(y, x, c) = static_cast<float>(
            static_cast<double>(chw.data[(c * h + y) * w + x]) * stats.std[c] + stats.mean[c]);
  return img;
}

}  // namespace derm
