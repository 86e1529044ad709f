#ifndef DERM_CHECKPOINT_HPP
#define DERM_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "derm/tensor.hpp"

namespace derm {

// Serialized training artifact. Tensor order is preserved so that
// save -> load -> save is byte identical.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string config_text;  // canonical run config, reconstructs the architecture
  std::uint32_t epoch = 0;
  double best_val_f1 = 0.0;
  std::uint64_t adam_t = 0;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const;
};

std::uint32_t crc32(const std::uint8_t* data, std::size_t len);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// File writes go through a temp file plus rename.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Writes bytes atomically (temp file + rename). Shared by all artifact writers.
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace derm

#endif
