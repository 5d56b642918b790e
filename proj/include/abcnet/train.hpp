// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "abcnet/dataset.hpp"
#include "abcnet/metrics.hpp"
#include "abcnet/model.hpp"

namespace abcnet::train {

/// Raised when the training loss stops being finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Settings shared by train, eval and ablate. Keys of the line-oriented
/// config file match the field names; `model.<key>` entries override single
/// architecture fields of the named model.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 1;
  model::Precision precision = model::Precision::f32;
  std::string model = "full";
  std::map<std::string, std::string> model_overrides;
  std::string manifest;
  std::int64_t epochs = 200;
  std::int64_t batch_size = 32;
  double learning_rate = 3e-4;
  double weight_decay = 0.01;
  double gamma = 2.0;
  bool augment = true;
  /// Stop once validation reaches both targets; 0 disables a target.
  double stop_oa = 0.0;
  double stop_miou = 0.0;
  std::string output_dir = "run";
  std::string checkpoint;
  bool tta = false;

  /// Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// `key=value` lines; '#' starts a comment line.
  void load_file(const std::string& path);
  model::ABCNetConfig model_config() const;
};

struct EpochMetrics {
  std::int64_t epoch = 0;
  double train_loss = 0.0;
  double val_oa = 0.0;
  double val_miou = 0.0;
  double val_mean_f1 = 0.0;
  double val_kappa = 0.0;
  std::int64_t clamped_denominators = 0;
};

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochMetrics& m);

struct TrainResult {
  model::ABCNetConfig config;
  model::NetworkWeights weights;
  std::vector<EpochMetrics> history;
  bool reached_target = false;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// AdamW over augmented training patches with the principal and auxiliary
/// losses, validating after every epoch. Writes metrics.csv and a checkpoint
/// under output_dir when it is non-empty.
TrainResult train(const RunConfig& run, const model::ABCNetConfig& cfg,
                  const EpochCallback& on_epoch = {});
TrainResult train(const RunConfig& run, const EpochCallback& on_epoch = {});

/// Arg-max labels of B x K x H x W logits, stored as one mask per batch item.
std::vector<io::Image> argmax_masks(const Tensor& logits);

/// Logits for one image, optionally averaged over the TTA transform set.
Tensor predict_image(model::NetworkWeights& weights, const model::ABCNetConfig& cfg,
                     const io::Image& image, bool tta);

/// Confusion matrix over a sample set. Predicted masks are written as P5
/// files into dump_dir when it is non-empty.
metrics::ConfusionMatrix evaluate(model::NetworkWeights& weights, const model::ABCNetConfig& cfg,
                                  const std::vector<io::Sample>& samples, bool tta,
                                  const std::string& dump_dir = {});

struct AblationRow {
  model::Ablation variant;
  std::string label;
  std::int64_t parameters = 0;
  double mean_f1 = 0.0;
  double oa = 0.0;
  double miou = 0.0;
  std::int64_t epochs_run = 0;
};

/// Trains and evaluates the five component variants in table order.
std::vector<AblationRow> ablate(const RunConfig& run);
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_text(const std::vector<AblationRow>& rows);

}  // namespace abcnet::train
