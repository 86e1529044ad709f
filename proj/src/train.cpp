#include "derm/train.hpp"

#include <cmath>

#include <json.hpp>

namespace derm {

namespace {

Tensor<real> train_batch(const LabeledDataset& ds, const std::vector<std::size_t>& split,
                         const std::vector<std::size_t>& batch, const AugmentationConfig& aug,
                         std::uint64_t seed, std::uint64_t epoch, std::vector<int>& labels) {
  const std::size_t s = aug.output_size;
  Tensor<real> out({batch.size(), 3, s, s});
  labels.clear();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t idx = split[batch[b]];
    const Image img = augment(ds.images[idx], aug, seed, epoch, idx);
    const Tensor<real> chw = normalize(img);
    std::copy(chw.data.begin(), chw.data.end(), out.data.begin() + b * chw.size());
    labels.push_back(ds.entries[idx].label);
  }
  return out;
}

template <typename Model>
std::vector<double> forward_probs(const Model& model, const std::vector<Image>& images,
                                  std::size_t image_size, std::size_t batch_size) {
  std::vector<double> probs;
  probs.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(images.size(), start + batch_size); ++i)
      idx.push_back(i);
    const Tensor<real> batch = eval_batch(images, idx, image_size);
    const Tensor<real> logits = model.forward(nullptr, batch, false, nullptr);
    const Prediction p = predict(logits);
    probs.insert(probs.end(), p.probabilities.begin(), p.probabilities.end());
  }
  return probs;
}

template <typename Model>
Checkpoint snapshot(const RunConfig& cfg, Model& model, const AdamState<real>& state,
                    std::size_t epoch, double val_f1) {
  Checkpoint ckpt;
  ckpt.config_text = serialize_config(cfg);
  ckpt.epoch = static_cast<std::uint32_t>(epoch);
  ckpt.best_val_f1 = val_f1;
  ckpt.adam_t = static_cast<std::uint64_t>(state.t);
  const NamedParams<real> named = model.parameters().all();
  for (std::size_t i = 0; i < named.size(); ++i)
    ckpt.tensors.emplace_back(named[i].first, named[i].second->template cast<float>());
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    ckpt.tensors.emplace_back("adam.m." + named[i].first, state.m[i].cast<float>());
    ckpt.tensors.emplace_back("adam.v." + named[i].first, state.v[i].cast<float>());
  }
  return ckpt;
}

template <typename Model>
TrainResult run_training(Model& model, const RunConfig& cfg, const LabeledDataset& ds,
                         const DatasetSplits& splits, const EpochCallback& on_epoch) {
  if (cfg.epochs == 0) throw ConfigError("train: epochs must be >= 1");
  if (splits.train.empty() || splits.val.empty())
    throw ConfigError("train: train and validation splits must be nonempty");
  if (!ds.loaded()) throw IoError("train: dataset images are not loaded");

  std::int64_t n0 = 0, n1 = 0;
  for (std::size_t idx : splits.train) (ds.entries[idx].label == 1 ? n1 : n0) += 1;
  const ClassWeights weights = class_weights(n0, n1);

  model.init(cfg.model_config(), cfg.seed);
  ModelParameters<real> params = model.parameters();
  const NamedParams<real> named = params.all();

  AdamState<real> state;
  AdamConfig adam_cfg;
  adam_cfg.weight_decay = cfg.weight_decay;
  const AugmentationConfig aug = cfg.augment_config();

  std::vector<Image> val_images;
  std::vector<int> val_labels;
  for (std::size_t idx : splits.val) {
    val_images.push_back(ds.images[idx]);
    val_labels.push_back(ds.entries[idx].label);
  }

  TrainResult result;
  result.best_val_f1 = -1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = step_lr(epoch, cfg.lr, cfg.lr_step, cfg.lr_gamma);
    const auto batches = make_batches(splits.train.size(), cfg.batch_size, cfg.seed, epoch, true);
    Rng dropout_rng(mix_seed(cfg.seed, epoch, 0xd40));

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      std::vector<int> labels;
      const Tensor<real> images =
          train_batch(ds, splits.train, batches[bi], aug, cfg.seed, epoch, labels);

      Graph<real> g;
      params.watch_all(g);
      const Tensor<real> logits = model.forward(&g, images, true, &dropout_rng);
      const Tensor<real> probs = ops::sigmoid(&g, logits);
      const Tensor<real> loss = weighted_bce(&g, probs, labels, weights);
      const double loss_value = static_cast<double>(loss.data[0]);
      if (!std::isfinite(loss_value))
        throw DivergenceError("training diverged: non-finite loss at epoch " +
                              std::to_string(epoch) + ", batch " + std::to_string(bi));
      g.backward(loss);

      std::vector<Tensor<real>> grads;
      grads.reserve(named.size());
      for (auto& [name, p] : named) grads.push_back(g.grad(*p));
      params.detach_all();
      adam_step(named, grads, state, lr, adam_cfg);

      loss_sum += loss_value * static_cast<double>(labels.size());
      seen += labels.size();
    }

    const std::vector<double> val_probs =
        forward_probs(model, val_images, cfg.image_size, cfg.batch_size);
    Tensor<real> vp({val_probs.size()});
    for (std::size_t i = 0; i < val_probs.size(); ++i) vp.data[i] = static_cast<real>(val_probs[i]);
    const Tensor<real> val_loss = weighted_bce<real>(nullptr, vp, val_labels, weights);
    const MetricsReport m = evaluate_metrics(val_probs, val_labels);
    const double f1 = cfg.select_f1_weighted ? m.weighted_f1 : m.malignant.f1;

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = loss_sum / static_cast<double>(seen);
    log.val_loss = static_cast<double>(val_loss.data[0]);
    log.val_accuracy = m.accuracy;
    log.val_precision = cfg.select_f1_weighted ? m.weighted_precision : m.malignant.precision;
    log.val_recall = cfg.select_f1_weighted ? m.weighted_recall : m.malignant.recall;
    log.val_f1 = f1;
    result.log.push_back(log);

    if (f1 > result.best_val_f1) {
      result.best_val_f1 = f1;
      result.best_epoch = epoch;
      result.best = snapshot(cfg, model, state, epoch, f1);
    }
    if (on_epoch && on_epoch(log)) break;
  }
  return result;
}

template <typename Model>
std::vector<double> probs_from_checkpoint(const RunConfig& cfg, const Checkpoint& ckpt,
                                          const std::vector<Image>& images,
                                          std::size_t batch_size) {
  Model model;
  model.init(cfg.model_config(), cfg.seed);
  apply_checkpoint(ckpt, model.parameters().all());
  return forward_probs(model, images, cfg.image_size, batch_size);
}

}  // namespace

std::string epoch_log_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["lr"] = log.lr;
  j["train_loss"] = log.train_loss;
  j["val_loss"] = log.val_loss;
  j["val_accuracy"] = log.val_accuracy;
  j["val_precision"] = log.val_precision;
  j["val_recall"] = log.val_recall;
  j["val_f1"] = log.val_f1;
  return j.dump();
}

Tensor<real> eval_batch(const std::vector<Image>& images, const std::vector<std::size_t>& indices,
                        std::size_t image_size) {
  Tensor<real> out({indices.size(), 3, image_size, image_size});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Image& src = images[indices[b]];
    const Tensor<real> chw = normalize(src.height == image_size && src.width == image_size
                                           ? src
                                           : resize_bilinear(src, image_size, image_size));
    std::copy(chw.data.begin(), chw.data.end(), out.data.begin() + b * chw.size());
  }
  return out;
}

TrainResult train_model(const RunConfig& cfg, const LabeledDataset& ds,
                        const DatasetSplits& splits, const EpochCallback& on_epoch) {
  if (cfg.model_kind == ModelKind::Sequential) {
    SequentialModel<real> model;
    return run_training(model, cfg, ds, splits, on_epoch);
  }
  ParallelModel<real> model;
  return run_training(model, cfg, ds, splits, on_epoch);
}

std::vector<double> predict_probabilities(const RunConfig& cfg, const Checkpoint& ckpt,
                                          const std::vector<Image>& images,
                                          std::size_t batch_size) {
  if (cfg.model_kind == ModelKind::Sequential)
    return probs_from_checkpoint<SequentialModel<real>>(cfg, ckpt, images, batch_size);
  return probs_from_checkpoint<ParallelModel<real>>(cfg, ckpt, images, batch_size);
}

}  // namespace derm
