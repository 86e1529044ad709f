#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "derm/checkpoint.hpp"
#include "derm/config.hpp"
#include "derm/dataset.hpp"
#include "derm/error.hpp"
#include "derm/gradcheck_suite.hpp"
#include "derm/metrics.hpp"
#include "derm/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitCheckpoint = 5;
constexpr int kExitGradcheck = 6;

derm::SplitRatios parse_ratios(const std::string& text) {
  double a = 0, b = 0, c = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf%c", &a, &b, &c, &tail) != 3)
    throw derm::ConfigError("ratios must be three comma-separated numbers, got '" + text + "'");
  if (a <= 0 || b < 0 || c < 0 || std::abs(a + b + c - 1.0) > 1e-9)
    throw derm::ConfigError("ratios must be nonnegative and sum to 1, got '" + text + "'");
  return {a, b, c};
}

int cmd_split(const std::string& manifest, const std::string& data_root,
              const std::string& out_dir, std::uint64_t seed, const std::string& ratios_text) {
  const derm::SplitRatios ratios = parse_ratios(ratios_text);
  derm::LabeledDataset ds = derm::load_manifest(manifest, data_root);
  const derm::DatasetSplits splits = derm::stratified_split(ds, ratios, seed);
  std::filesystem::create_directories(out_dir);
  derm::write_manifest(out_dir + "/train.csv", ds, splits.train);
  derm::write_manifest(out_dir + "/val.csv", ds, splits.val);
  derm::write_manifest(out_dir + "/test.csv", ds, splits.test);

  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["ratios"] = {ratios.train, ratios.val, ratios.test};
  j["counts"] = {{"train", splits.train.size()},
                 {"val", splits.val.size()},
                 {"test", splits.test.size()}};
  derm::write_file_atomic(out_dir + "/split.json", j.dump(2) + "\n");
  return kExitOk;
}

// Loads the three split manifests into one dataset with index ranges.
void load_splits(const derm::RunConfig& cfg, derm::LabeledDataset& ds,
                 derm::DatasetSplits& splits) {
  if (cfg.split_dir.empty())
    throw derm::ConfigError("config: [data] split_dir is required for training");
  for (const char* name : {"train.csv", "val.csv", "test.csv"}) {
    derm::LabeledDataset part = derm::load_manifest(cfg.split_dir + "/" + name, cfg.data_root);
    std::vector<std::size_t>& idx = std::string(name) == "train.csv" ? splits.train
                                    : std::string(name) == "val.csv" ? splits.val
                                                                     : splits.test;
    for (auto& e : part.entries) {
      idx.push_back(ds.entries.size());
      ds.entries.push_back(e);
    }
    ds.image_root = part.image_root;
  }
  derm::load_images(ds);
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  const derm::RunConfig cfg = derm::parse_config_file(config_path);
  derm::LabeledDataset ds;
  derm::DatasetSplits splits;
  load_splits(cfg, ds, splits);
  std::filesystem::create_directories(out_dir);

  const derm::TrainResult result = derm::train_model(cfg, ds, splits, [](const derm::EpochLog& l) {
    std::fprintf(stderr, "epoch %zu lr %.3e train_loss %.4f val_loss %.4f val_f1 %.4f\n", l.epoch,
                 l.lr, l.train_loss, l.val_loss, l.val_f1);
    return false;
  });

  derm::save_checkpoint(result.best, out_dir + "/best.ckpt");
  std::string log;
  for (const auto& entry : result.log) log += derm::epoch_log_json(entry) + "\n";
  derm::write_file_atomic(out_dir + "/log.jsonl", log);

  std::vector<derm::Image> test_images;
  std::vector<int> test_labels;
  for (std::size_t idx : splits.test) {
    test_images.push_back(ds.images[idx]);
    test_labels.push_back(ds.entries[idx].label);
  }
  if (test_images.empty()) throw derm::ConfigError("train: test split is empty");
  const std::vector<double> probs =
      derm::predict_probabilities(cfg, result.best, test_images, cfg.batch_size);
  const derm::MetricsReport report = derm::evaluate_metrics(probs, test_labels);
  derm::write_file_atomic(out_dir + "/metrics.json", derm::metrics_report_json(report) + "\n");
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& manifest,
             const std::string& data_root, const std::string& out_dir) {
  const derm::Checkpoint ckpt = derm::load_checkpoint(checkpoint_path);
  const derm::RunConfig cfg = derm::parse_config(ckpt.config_text);
  derm::LabeledDataset ds = derm::load_manifest(manifest, data_root);
  derm::load_images(ds);

  std::vector<int> labels;
  for (const auto& e : ds.entries) labels.push_back(e.label);
  const std::vector<double> probs =
      derm::predict_probabilities(cfg, ckpt, ds.images, cfg.batch_size);
  const derm::MetricsReport report = derm::evaluate_metrics(probs, labels);

  std::filesystem::create_directories(out_dir);
  derm::write_file_atomic(out_dir + "/metrics.json", derm::metrics_report_json(report) + "\n");
  derm::write_file_atomic(out_dir + "/confusion.csv", derm::confusion_csv(report.cm));
  std::cout << derm::metrics_report_json(report) << "\n";
  return kExitOk;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& image_path) {
  const derm::Checkpoint ckpt = derm::load_checkpoint(checkpoint_path);
  const derm::RunConfig cfg = derm::parse_config(ckpt.config_text);
  const derm::Image img = derm::read_ppm_file(image_path);
  const double p = derm::predict_probabilities(cfg, ckpt, {img}, 1)[0];
  std::printf("%s %.6f\n", p >= 0.5 ? "malignant" : "non-malignant", p);
  return kExitOk;
}

int cmd_gradcheck(const std::string& config_path) {
  if (!config_path.empty()) (void)derm::parse_config_file(config_path);
  const auto cases = derm::run_gradcheck_suite();
  bool ok = true;
  std::printf("%-26s %-14s %s\n", "layer", "max_rel_err", "status");
  for (const auto& c : cases) {
    const bool pass = c.report.max_rel_err < derm::kGradCheckTolerance;
    std::printf("%-26s %-14.3e %s\n", c.name.c_str(), c.report.max_rel_err,
                pass ? "ok" : "FAIL");
    if (!pass) {
      std::fprintf(stderr, "gradcheck failed: %s (worst %s[%zu], rel err %.3e)\n", c.name.c_str(),
                   c.report.worst_param.c_str(), c.report.worst_index, c.report.max_rel_err);
      ok = false;
    }
  }
  return ok ? kExitOk : kExitGradcheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid CNN-Transformer skin lesion classifier"};
  app.require_subcommand(1);

  std::string manifest, data_root = ".", out_dir = ".", ratios = "0.8,0.1,0.1";
  std::string config_path, checkpoint_path, image_path;
  std::uint64_t seed = 0;

  auto* split = app.add_subcommand("split", "Stratified train/val/test split");
  split->add_option("--manifest", manifest)->required();
  split->add_option("--data-root", data_root);
  split->add_option("--out-dir", out_dir)->required();
  split->add_option("--seed", seed);
  split->add_option("--ratios", ratios);

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", config_path)->required();
  train->add_option("--out-dir", out_dir)->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  eval->add_option("--checkpoint", checkpoint_path)->required();
  eval->add_option("--manifest", manifest)->required();
  eval->add_option("--data-root", data_root);
  eval->add_option("--out-dir", out_dir);

  auto* predict = app.add_subcommand("predict", "Classify a single PPM image");
  predict->add_option("--checkpoint", checkpoint_path)->required();
  predict->add_option("--image", image_path)->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
  gradcheck->add_option("--config", config_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (split->parsed()) return cmd_split(manifest, data_root, out_dir, seed, ratios);
    if (train->parsed()) return cmd_train(config_path, out_dir);
    if (eval->parsed()) return cmd_eval(checkpoint_path, manifest, data_root, out_dir);
    if (predict->parsed()) return cmd_predict(checkpoint_path, image_path);
    if (gradcheck->parsed()) return cmd_gradcheck(config_path);
  } catch (const derm::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const derm::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const derm::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const derm::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
