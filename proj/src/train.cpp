// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "abcnet/augment.hpp"
#include "abcnet/checkpoint.hpp"
#include "abcnet/csv.hpp"
#include "abcnet/losses.hpp"
#include "abcnet/optim.hpp"
#include "abcnet/pnm.hpp"

namespace abcnet::train {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long r = std::stoll(v, &used);
    if (used == v.size()) return r;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used == v.size() && std::isfinite(r)) return r;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void check_labels(const std::vector<io::Sample>& samples, std::int64_t classes) {
  for (const io::Sample& s : samples) {
    for (std::uint8_t v : s.mask.samples) {
      if (v != losses::kIgnoreLabel && v >= classes) {
        throw LabelError("mask label " + std::to_string(v) + " outside " + std::to_string(classes) +
                         " classes");
      }
    }
  }
}

void check_classes(const io::DatasetManifest& m, const model::ABCNetConfig& cfg) {
  if (m.num_classes != 0 && m.num_classes != cfg.num_classes) {
    throw ConfigError("dataset has " + std::to_string(m.num_classes) + " classes, model has " +
                      std::to_string(cfg.num_classes));
  }
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "command") command = v;
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, v));
  else if (key == "precision") {
    if (v == "f32" || v == "float32") precision = model::Precision::f32;
    else if (v == "f64" || v == "float64") precision = model::Precision::f64;
    else throw ConfigError("precision must be f32 or f64, got '" + v + "'");
  } else if (key == "model") model = v;
  else if (key.rfind("model.", 0) == 0) model_overrides[key.substr(6)] = v;
  else if (key == "manifest") manifest = v;
  else if (key == "epochs") epochs = parse_int(key, v);
  else if (key == "batch_size") batch_size = parse_int(key, v);
  else if (key == "learning_rate") learning_rate = parse_double(key, v);
  else if (key == "weight_decay") weight_decay = parse_double(key, v);
  else if (key == "gamma") gamma = parse_double(key, v);
  else if (key == "augment") augment = parse_bool(key, v);
  else if (key == "stop_oa") stop_oa = parse_double(key, v);
  else if (key == "stop_miou") stop_miou = parse_double(key, v);
  else if (key == "output_dir") output_dir = v;
  else if (key == "checkpoint") checkpoint = v;
  else if (key == "tta") tta = parse_bool(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

model::ABCNetConfig RunConfig::model_config() const {
  return checkpoint::apply_config_entries(model_overrides, model::ABCNetConfig::named(model));
}

std::string epoch_csv_header() {
  return csv::row({"epoch", "train_loss", "val_oa", "val_miou", "val_mean_f1", "val_kappa",
                   "clamped_denominators"});
}

std::string epoch_csv_row(const EpochMetrics& m) {
  return csv::row({csv::number(m.epoch), csv::number(m.train_loss), csv::number(m.val_oa),
                   csv::number(m.val_miou), csv::number(m.val_mean_f1), csv::number(m.val_kappa),
                   csv::number(m.clamped_denominators)});
}

std::vector<io::Image> argmax_masks(const Tensor& logits) {
  if (logits.rank() != 4) throw DimensionError("argmax_masks expects B x K x H x W");
  const std::int64_t B = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  std::vector<io::Image> out;
  for (std::int64_t b = 0; b < B; ++b) {
    io::Image m(W, H, 1);
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t x = 0; x < W; ++x) {
        std::int64_t best = 0;
        for (std::int64_t k = 1; k < K; ++k) {
          if (logits.at(b, k, y, x) > logits.at(b, best, y, x)) best = k;
        }
        m.at(x, y) = static_cast<std::uint8_t>(best);
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

Tensor predict_image(model::NetworkWeights& weights, const model::ABCNetConfig& cfg,
                     const io::Image& image, bool tta) {
  const Tensor x = io::images_to_tensor({&image});
  if (!tta) return model::predict(weights, cfg, x);
  const std::vector<io::Transform> ts = io::tta_transforms();
  std::vector<Tensor> maps;
  for (io::Transform t : ts) maps.push_back(model::predict(weights, cfg, io::apply_transform(x, t)));
  return io::tta_merge(maps, ts);
}

metrics::ConfusionMatrix evaluate(model::NetworkWeights& weights, const model::ABCNetConfig& cfg,
                                  const std::vector<io::Sample>& samples, bool tta,
                                  const std::string& dump_dir) {
  check_labels(samples, cfg.num_classes);
  if (!dump_dir.empty()) fs::create_directories(dump_dir);
  metrics::ConfusionMatrix cm(cfg.num_classes);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Tensor logits = predict_image(weights, cfg, samples[i].image, tta);
    const io::Image pred = argmax_masks(logits).front();
    cm.accumulate(pred.samples, samples[i].mask.samples);
    if (!dump_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "pred_%03zu.pgm", i);
      io::write_pnm((fs::path(dump_dir) / name).string(), pred);
    }
  }
  return cm;
}

TrainResult train(const RunConfig& run, const EpochCallback& on_epoch) {
  return train(run, run.model_config(), on_epoch);
}

TrainResult train(const RunConfig& run, const model::ABCNetConfig& base, const EpochCallback& on_epoch) {
  if (run.manifest.empty()) throw ConfigError("train: no dataset manifest given");
  const io::DatasetManifest manifest = io::DatasetManifest::read(run.manifest);
  manifest.validate();
  model::ABCNetConfig cfg = base;
  cfg.training_mode = true;
  cfg.validate();
  check_classes(manifest, cfg);
  const std::vector<io::Sample> train_set = io::load_split(manifest, "train");
  const std::vector<io::Sample> val_set = io::load_split(manifest, "val");
  if (train_set.empty()) throw ConfigError("train: manifest has no 'train' entries");
  check_labels(train_set, cfg.num_classes);
  check_labels(val_set, cfg.num_classes);

  TrainResult result{cfg, model::NetworkWeights::init(cfg, run.seed), {}, false};
  model::NetworkWeights& weights = result.weights;
  if (run.precision == model::Precision::f32) weights.round_to_float();

  std::ofstream csv_out;
  if (!run.output_dir.empty()) {
    fs::create_directories(run.output_dir);
    csv_out.open(fs::path(run.output_dir) / "metrics.csv", std::ios::binary);
    csv_out << epoch_csv_header() << std::flush;
  }

  OptimizerState opt;
  opt.config.learning_rate = run.learning_rate;
  opt.config.weight_decay = run.weight_decay;
  const losses::LossConfig loss_cfg{run.gamma};
  const io::AugmentConfig aug = run.augment ? io::AugmentConfig{} : io::AugmentConfig::none();
  std::vector<std::size_t> order(train_set.size());

  for (std::int64_t epoch = 1; epoch <= run.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(mix(run.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    EpochMetrics em;
    em.epoch = epoch;
    double loss_sum = 0.0;
    std::int64_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(run.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(run.batch_size));
      std::vector<io::Image> imgs, masks;
      for (std::size_t j = start; j < stop; ++j) {
        const io::Sample& s = train_set[order[j]];
        auto [im, mk] = io::augment(s.image, s.mask,
                                    mix(mix(run.seed, static_cast<std::uint64_t>(epoch)), order[j]), aug);
        imgs.push_back(std::move(im));
        masks.push_back(std::move(mk));
      }
      std::vector<const io::Image*> ip, mp;
      for (std::size_t j = 0; j < imgs.size(); ++j) {
        ip.push_back(&imgs[j]);
        mp.push_back(&masks[j]);
      }
      const losses::Labels labels = io::masks_to_labels(mp);

      Graph g(true);
      model::Context ctx(g, weights, ops::BatchNormMode::train);
      const model::ForwardOutput out = model::abcnet_forward(ctx, g.constant(io::images_to_tensor(ip)), cfg);
      const Var loss = losses::total_loss(out.logits, out.aux1, out.aux2, labels, loss_cfg);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw DivergenceError("loss is " + std::to_string(value) + " at epoch " + std::to_string(epoch) +
                              ", batch starting at " + std::to_string(start) +
                              " (learning_rate=" + csv::number(run.learning_rate) + ")");
      }
      em.clamped_denominators += ctx.clamped_denominators;
      loss_sum += value * static_cast<double>(stop - start);
      seen += static_cast<std::int64_t>(stop - start);
      g.backward(loss);

      std::unordered_map<std::string, Tensor> grads;
      for (auto& pg : g.parameter_grads()) grads.emplace(pg.name, std::move(pg.grad));
      std::vector<Tensor*> params;
      std::vector<const Tensor*> grad_ptrs;
      std::vector<Tensor> unused;
      unused.reserve(weights.names().size());
      for (std::size_t p = 0; p < weights.names().size(); ++p) {
        params.push_back(&weights.values()[p]);
        auto it = grads.find(weights.names()[p]);
        if (it != grads.end()) {
          grad_ptrs.push_back(&it->second);
        } else {
          unused.push_back(Tensor::zeros(weights.values()[p].shape()));
          grad_ptrs.push_back(&unused.back());
        }
      }
      adamw_step(params, grad_ptrs, opt);
      if (run.precision == model::Precision::f32) weights.round_to_float();
    }
    em.train_loss = loss_sum / static_cast<double>(seen);

    if (!val_set.empty()) {
      const metrics::ConfusionMatrix cm = evaluate(weights, cfg, val_set, false);
      em.val_oa = metrics::overall_accuracy(cm);
      em.val_miou = metrics::miou(cm);
      em.val_mean_f1 = metrics::f1_scores(cm).mean;
      try {
        em.val_kappa = metrics::kappa(cm).kappa;
      } catch (const Error&) {
        em.val_kappa = std::nan("");
      }
    }
    result.history.push_back(em);
    if (csv_out.is_open()) csv_out << epoch_csv_row(em) << std::flush;
    if (on_epoch) on_epoch(em);
    const bool has_target = run.stop_oa > 0 || run.stop_miou > 0;
    if (has_target && em.val_oa >= run.stop_oa && em.val_miou >= run.stop_miou) {
      result.reached_target = true;
      break;
    }
  }
  if (!run.output_dir.empty()) {
    checkpoint::save((fs::path(run.output_dir) / "checkpoint").string(), weights, cfg);
  }
  return result;
}

std::vector<AblationRow> ablate(const RunConfig& run) {
  const model::ABCNetConfig base = run.model_config();
  const io::DatasetManifest manifest = io::DatasetManifest::read(run.manifest);
  const std::vector<io::Sample> val_set = io::load_split(manifest, "val");
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < model::kAblationRows.size(); ++i) {
    const model::Ablation variant = model::kAblationRows[i];
    RunConfig r = run;
    if (!run.output_dir.empty()) r.output_dir = (fs::path(run.output_dir) / ("row" + std::to_string(i + 1))).string();
    TrainResult tr = train(r, model::ablation_config(variant, base));
    AblationRow row;
    row.variant = variant;
    row.label = std::string(model::ablation_label(variant));
    row.parameters = model::count_parameters(tr.weights).inference_total;
    row.epochs_run = static_cast<std::int64_t>(tr.history.size());
    if (!val_set.empty()) {
      const metrics::ConfusionMatrix cm = evaluate(tr.weights, tr.config, val_set, run.tta);
      row.mean_f1 = metrics::f1_scores(cm).mean;
      row.oa = metrics::overall_accuracy(cm);
      row.miou = metrics::miou(cm);
    }
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = csv::row({"method", "parameters", "mean_f1", "oa", "miou", "epochs"});
  for (const AblationRow& r : rows) {
    out += csv::row({r.label, csv::number(r.parameters), csv::number(r.mean_f1), csv::number(r.oa),
                     csv::number(r.miou), csv::number(r.epochs_run)});
  }
  return out;
}

std::string ablation_text(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-22s %12s %9s %9s %9s\n", "Method", "Parameters", "Mean F1",
                "OA", "mIoU");
  os << line;
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof(line), "%-22s %12lld %9.4f %9.4f %9.4f\n", r.label.c_str(),
                  static_cast<long long>(r.parameters), 100 * r.mean_f1, 100 * r.oa, 100 * r.miou);
    os << line;
  }
  return os.str();
}

}  // namespace abcnet::train
