#ifndef DERM_CONFIG_HPP
#define DERM_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "derm/image.hpp"
#include "derm/model.hpp"

namespace derm {

// Line-oriented `key = value` configuration under bracketed sections.
// Unknown sections or keys are rejected with the offending line number.
struct RunConfig {
  // [data]
  std::string data_root = ".";
  std::string manifest;
  std::string split_dir;
  std::size_t image_size = 224;

  // [model]
  ModelKind model_kind = ModelKind::Sequential;
  std::vector<std::size_t> stage_channels{16, 32, 64, 128};
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t ffn_dim = 128;
  double dropout = 0.1;
  std::size_t patch_size = 16;
  FusionKind fusion = FusionKind::Spline;
  std::size_t fusion_hidden = 64;
  std::size_t fusion_out = 32;
  std::size_t spline_grid_size = 8;
  std::size_t spline_order = 3;
  double spline_lo = -2.0;
  double spline_hi = 2.0;

  // [train]
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  std::size_t lr_step = 5;
  double lr_gamma = 0.5;
  std::uint64_t seed = 0;
  bool deterministic = true;
  bool select_f1_weighted = true;  // alternative: malignant-positive F1

  // [augment]
  AugmentationConfig augment;
  bool augment_output_size_set = false;

  ModelConfig model_config() const;
  AugmentationConfig augment_config() const;  // output_size defaults to image_size
  void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Canonical round-trippable rendering; parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& cfg);

}  // namespace derm

#endif
