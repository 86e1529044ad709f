#ifndef DERM_DATASET_HPP
#define DERM_DATASET_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "derm/image.hpp"

namespace derm {

struct ManifestEntry {
  std::string image_path;  // relative to the data root
  std::string raw_label;   // original manifest token
  int label = 0;           // 0 = non-malignant, 1 = malignant
};

// Decoded samples are filled in lazily by load_images().
struct LabeledDataset {
  std::string image_root;
  std::vector<ManifestEntry> entries;
  std::vector<Image> images;  // aligned with entries when loaded

  bool loaded() const { return images.size() == entries.size(); }
};

// Maps a manifest label token to the binary target; empty optional for
// unknown codes. mel/bcc/akiec -> 1, nv/bkl/vasc/df -> 0; "0"/"1" pass
// through.
std::optional<int> map_label(const std::string& token);

// CSV with header `image_path,label`. Verifies every referenced image file
// exists under image_root.
LabeledDataset load_manifest(const std::string& manifest_path, const std::string& image_root);

// Decodes every referenced PPM into memory.
void load_images(LabeledDataset& ds);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplits {
  std::vector<std::size_t> train, val, test;  // indices into entries
};

// Stratified per class: seeded shuffle, then largest-remainder rounding of
// the cumulative ratios. Deterministic for a fixed seed.
DatasetSplits stratified_split(const LabeledDataset& ds, const SplitRatios& ratios,
                               std::uint64_t seed);

// Epoch-shuffled index batches; the final partial batch is kept.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t seed, std::uint64_t epoch,
                                                   bool shuffle);

// Writes `image_path,label` rows for the given indices.
void write_manifest(const std::string& path, const LabeledDataset& ds,
                    const std::vector<std::size_t>& indices);

}  // namespace derm

#endif
