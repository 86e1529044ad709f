#ifndef DERM_IMAGE_HPP
#define DERM_IMAGE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "derm/rng.hpp"
#include "derm/tensor.hpp"

namespace derm {

// Interleaved RGB, values in [0,1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // height*width*3, HWC

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, 0.0f) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
};

struct NormalizationStats {
  double mean[3] = {0.485, 0.456, 0.406};
  double std[3] = {0.229, 0.224, 0.225};
};

struct AugmentationConfig {
  double crop_scale_lo = 0.8, crop_scale_hi = 1.0;
  double crop_aspect_lo = 3.0 / 4.0, crop_aspect_hi = 4.0 / 3.0;
  double rotation_degrees = 20.0;
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  double jitter_lo = 0.8, jitter_hi = 1.2;  // brightness, contrast, saturation
  double grayscale_prob = 0.1;
  double blur_prob = 0.5;
  double blur_sigma_lo = 0.1, blur_sigma_hi = 2.0;
  std::size_t blur_kernel = 5;
  std::size_t output_size = 224;

  void validate() const;
};

// Binary PPM (P6), maxval 255.
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image read_ppm_file(const std::string& path);
void write_ppm_file(const std::string& path, const Image& img);

// Bilinear, half-pixel-center convention, clamped sampling.
Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w);

// Individual transforms (exposed for testing; `augment` composes them).
Image hflip(const Image& img);
Image vflip(const Image& img);
Image rotate_bilinear(const Image& img, double degrees);  // zero fill outside
Image adjust_brightness(const Image& img, double factor);
Image adjust_contrast(const Image& img, double factor);
Image adjust_saturation(const Image& img, double factor);
Image to_grayscale(const Image& img);  // luma 0.299/0.587/0.114
Image gaussian_blur(const Image& img, std::size_t kernel, double sigma);  // reflect padding
Image random_resized_crop(const Image& img, const AugmentationConfig& cfg, Rng& rng);

// Full training-time pipeline in fixed order: crop -> rotate -> hflip ->
// vflip -> jitter -> grayscale -> blur. Per-sample stream seeded by
// mix(global_seed, epoch, sample_index).
Image augment(const Image& img, const AugmentationConfig& cfg, std::uint64_t global_seed,
              std::uint64_t epoch, std::uint64_t sample_index);

// (X - mu) / sigma per channel, channel-first output [3 x H x W].
Tensor<real> normalize(const Image& img, const NormalizationStats& stats = {});
Image denormalize(const Tensor<real>& chw, const NormalizationStats& stats = {});

}  // namespace derm

#endif
