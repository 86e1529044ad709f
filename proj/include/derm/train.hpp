#ifndef DERM_TRAIN_HPP
#define DERM_TRAIN_HPP

#include <functional>
#include <string>
#include <vector>

#include "derm/checkpoint.hpp"
#include "derm/config.hpp"
#include "derm/dataset.hpp"
#include "derm/loss.hpp"
#include "derm/metrics.hpp"
#include "derm/model.hpp"
#include "derm/optimizer.hpp"

namespace derm {

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double val_precision = 0.0;
  double val_recall = 0.0;
  double val_f1 = 0.0;
};

std::string epoch_log_json(const EpochLog& log);

struct TrainResult {
  Checkpoint best;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  std::vector<EpochLog> log;
};

// Optional per-epoch observer, e.g. to stream progress or stop early once a
// target is reached (return true to stop after the current epoch).
using EpochCallback = std::function<bool(const EpochLog&)>;

// Class-weighted training with Adam and a step learning-rate schedule.
// Deterministic for a fixed seed. The best checkpoint is the epoch with the
// highest validation F1 (weighted or malignant per config, ties resolve to
// the earlier epoch).
TrainResult train_model(const RunConfig& cfg, const LabeledDataset& ds,
                        const DatasetSplits& splits, const EpochCallback& on_epoch = {});

// Copies checkpoint tensors into the model parameters, by name. Missing
// tensors and shape mismatches are errors naming the tensor.
template <typename T>
void apply_checkpoint(const Checkpoint& ckpt, const NamedParams<T>& params) {
  for (auto& [name, p] : params) {
    const Tensor<float>* src = ckpt.find(name);
    if (!src) throw CheckpointError("checkpoint is missing tensor " + name);
    if (src->shape != p->shape)
      throw CheckpointError("checkpoint tensor " + name + " has shape " + shape_str(src->shape) +
                            ", expected " + shape_str(p->shape));
    for (std::size_t i = 0; i < p->size(); ++i) p->data[i] = static_cast<T>(src->data[i]);
  }
}

// Assembles a normalized [B x 3 x S x S] batch; images not already S x S
// are bilinearly resized. Used for validation, evaluation, and prediction.
Tensor<real> eval_batch(const std::vector<Image>& images, const std::vector<std::size_t>& indices,
                        std::size_t image_size);

// Forward pass in eval mode for either model kind; returns probabilities.
std::vector<double> predict_probabilities(const RunConfig& cfg, const Checkpoint& ckpt,
                                          const std::vector<Image>& images,
                                          std::size_t batch_size = 32);

}  // namespace derm

#endif
