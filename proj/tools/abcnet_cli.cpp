// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

// abcnet: benchmarks, training, evaluation, ablation and gradient checks.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <string>
#include <type_traits>
#include <vector>

#include "abcnet/bench.hpp"
#include "abcnet/checkpoint.hpp"
#include "abcnet/csv.hpp"
#include "abcnet/dataset.hpp"
#include "abcnet/gradcheck_suite.hpp"
#include "abcnet/metrics.hpp"
#include "abcnet/parallel.hpp"
#include "abcnet/train.hpp"

namespace fs = std::filesystem;
using namespace abcnet;

namespace {

// Writes to `path`, or stdout for "" and "-". With append, the header is
// dropped when the file already has content.
void emit(const std::string& path, bool append, const std::function<std::string(bool)>& render) {
  if (path.empty() || path == "-") {
    std::cout << render(true) << std::flush;
    return;
  }
  const bool has_content = append && fs::exists(path) && fs::file_size(path) > 0;
  std::ofstream out(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!out) throw ConfigError("cannot write " + path);
  out << render(!has_content);
}

std::vector<attention::Kind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<attention::Kind> kinds;
  for (const std::string& n : names) {
    if (n == "dot_product") kinds.push_back(attention::Kind::dot_product);
    else if (n == "linear") kinds.push_back(attention::Kind::linear);
    else throw ConfigError("unknown kernel '" + n + "' (dot_product, linear)");
  }
  return kinds;
}

// Flags that map onto RunConfig keys; applied after the config file.
struct RunFlags {
  std::string manifest, model, precision, output_dir, checkpoint;
  std::int64_t epochs = 0, batch_size = 0;
  double learning_rate = 0, weight_decay = 0, gamma = 0, stop_oa = 0, stop_miou = 0;
  bool no_augment = false, tta = false;
  std::vector<std::string> sets;
  std::vector<std::pair<CLI::Option*, std::function<void(train::RunConfig&)>>> bound;

  template <class T>
  void bind(CLI::App* app, const std::string& flag, const std::string& key, T& target,
            const std::string& help) {
    CLI::Option* opt = app->add_option(flag, target, help);
    bound.emplace_back(opt, [key, &target](train::RunConfig& r) {
      if constexpr (std::is_same_v<T, std::string>) r.set(key, target);
      else r.set(key, csv::number(target));
    });
  }

  void add_training(CLI::App* app) {
    bind(app, "--manifest", "manifest", manifest, "Dataset manifest (manifest.tsv)");
    bind(app, "--model", "model", model, "Model size: full or mini");
    bind(app, "--precision", "precision", precision, "Parameter storage: f32 or f64");
    bind(app, "--epochs", "epochs", epochs, "Training epochs");
    bind(app, "--batch-size", "batch_size", batch_size, "Images per step");
    bind(app, "--lr", "learning_rate", learning_rate, "AdamW learning rate");
    bind(app, "--weight-decay", "weight_decay", weight_decay, "AdamW decoupled weight decay");
    bind(app, "--gamma", "gamma", gamma, "Focal exponent of the auxiliary losses");
    bind(app, "--stop-oa", "stop_oa", stop_oa, "Stop once validation OA reaches this");
    bind(app, "--stop-miou", "stop_miou", stop_miou, "Stop once validation mIoU reaches this");
    bind(app, "--output-dir", "output_dir", output_dir, "Directory for metrics.csv and checkpoint/");
    CLI::Option* na = app->add_flag("--no-augment", no_augment, "Disable training augmentation");
    bound.emplace_back(na, [](train::RunConfig& r) { r.set("augment", "false"); });
    app->add_option("--set", sets, "Extra key=value config entries, e.g. model.fusion=sum");
  }

  void apply(train::RunConfig& run) const {
    for (const auto& [opt, fn] : bound) {
      if (opt->count() > 0) fn(run);
    }
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      run.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
  }
};

void print_epoch(const train::EpochMetrics& m) {
  std::fprintf(stderr, "epoch %4lld  loss %.5f  val OA %.4f  mIoU %.4f  mean F1 %.4f\n",
               static_cast<long long>(m.epoch), m.train_loss, m.val_oa, m.val_miou, m.val_mean_f1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ABCNet segmentation network, attention kernels and benchmark harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 1;
  int threads = 1;
  bool single_thread = false;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Seed for every random draw")->capture_default_str();
  app.add_option("--config", config_path, "Config file of key=value lines");
  app.add_option("--threads", threads, "Worker threads for tensor kernels")->capture_default_str();
  app.add_flag("--single-thread", single_thread, "Force serial execution");

  // bench-attn
  CLI::App* ba = app.add_subcommand("bench-attn", "Time dot-product vs linear attention over N");
  bench::AttentionBenchOptions ba_opts;
  std::vector<std::string> ba_kernels{"dot_product", "linear"};
  std::string ba_out;
  bool ba_append = false;
  double ba_budget_mb = static_cast<double>(ba_opts.memory_budget) / (1 << 20);
  ba->add_option("--sizes", ba_opts.sizes, "Ascending token counts")->delimiter(',')->capture_default_str();
  ba->add_option("--key-dim", ba_opts.key_dim, "D_k")->capture_default_str();
  ba->add_option("--value-dim", ba_opts.value_dim, "D_v")->capture_default_str();
  ba->add_option("--reps", ba_opts.repetitions, "Timed repetitions (median)")->capture_default_str();
  ba->add_option("--kernels", ba_kernels, "dot_product,linear")->delimiter(',');
  ba->add_option("--memory-budget-mb", ba_budget_mb, "Skip sizes whose working set exceeds this");
  ba->add_option("--out", ba_out, "CSV path (stdout by default)");
  ba->add_flag("--append", ba_append, "Append rows to an existing CSV");

  // bench-fps
  CLI::App* bf = app.add_subcommand("bench-fps", "Inference frames per second by resolution");
  bench::FpsBenchOptions bf_opts;
  std::string bf_model = "full", bf_out;
  bool bf_append = false;
  double bf_budget_mb = static_cast<double>(bf_opts.memory_budget) / (1 << 20);
  bf->add_option("--model", bf_model, "full or mini")->capture_default_str();
  bf->add_option("--resolutions", bf_opts.resolutions, "Square input extents, multiples of 32")
      ->delimiter(',')
      ->capture_default_str();
  bf->add_option("--reps", bf_opts.repetitions, "Timed repetitions (median)")->capture_default_str();
  bf->add_option("--memory-budget-mb", bf_budget_mb, "Skip resolutions estimated above this");
  bf->add_option("--out", bf_out, "CSV path (stdout by default)");
  bf->add_flag("--append", bf_append, "Append rows to an existing CSV");

  // train
  CLI::App* tr = app.add_subcommand("train", "Train on a dataset manifest");
  RunFlags tr_flags;
  tr_flags.add_training(tr);

  // eval
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  std::string ev_checkpoint, ev_manifest, ev_split = "val", ev_dump, ev_csv;
  bool ev_tta = false;
  ev->add_option("--checkpoint", ev_checkpoint, "Checkpoint directory")->required();
  ev->add_option("--manifest", ev_manifest, "Dataset manifest")->required();
  ev->add_option("--split", ev_split, "Split to evaluate")->capture_default_str();
  ev->add_flag("--tta", ev_tta, "Average logits over rotations and flips");
  ev->add_option("--dump-dir", ev_dump, "Write predicted masks (P5) here");
  ev->add_option("--csv", ev_csv, "Also write the per-class report as CSV");

  // ablate
  CLI::App* ab = app.add_subcommand("ablate", "Train and score the five component variants");
  RunFlags ab_flags;
  ab_flags.add_training(ab);
  std::string ab_out;
  ab->add_flag("--tta", ab_flags.tta, "Evaluate with test-time augmentation");
  ab->add_option("--out", ab_out, "CSV path for the table");

  // grad-check
  CLI::App* gc = app.add_subcommand("grad-check", "Finite-difference checks of every op and block");
  std::string gc_filter;
  double gc_tol = 1e-3;
  bool gc_list = false;
  gc->add_option("--filter", gc_filter, "Run checks whose name contains this");
  gc->add_option("--tolerance", gc_tol, "Maximum relative error")->capture_default_str();
  gc->add_flag("--list", gc_list, "List registered checks and exit");

  // synth
  CLI::App* sy = app.add_subcommand("synth", "Write a synthetic shapes dataset");
  std::string sy_out;
  std::int64_t sy_count = 16, sy_size = 128, sy_classes = 6;
  sy->add_option("--out", sy_out, "Output directory")->required();
  sy->add_option("--count", sy_count, "Number of images")->capture_default_str();
  sy->add_option("--size", sy_size, "Square image extent")->capture_default_str();
  sy->add_option("--classes", sy_classes, "Number of classes including background")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    set_num_threads(single_thread ? 1 : threads);

    auto run_config = [&](const RunFlags& flags) {
      train::RunConfig run;
      if (!config_path.empty()) run.load_file(config_path);
      if (seed_opt->count() > 0) run.seed = seed;
      flags.apply(run);
      return run;
    };

    if (ba->parsed()) {
      ba_opts.kinds = parse_kinds(ba_kernels);
      ba_opts.seed = seed;
      ba_opts.memory_budget = static_cast<std::size_t>(ba_budget_mb * (1 << 20));
      const auto records = bench::bench_attention(ba_opts);
      const auto slopes = bench::attention_slopes(records);
      emit(ba_out, ba_append, [&](bool header) { return bench::attention_csv(records, slopes, header); });
    } else if (bf->parsed()) {
      bf_opts.config = model::ABCNetConfig::named(bf_model);
      bf_opts.seed = seed;
      bf_opts.memory_budget = static_cast<std::size_t>(bf_budget_mb * (1 << 20));
      const auto records = bench::bench_fps(bf_opts);
      emit(bf_out, bf_append, [&](bool header) { return bench::fps_csv(records, header); });
    } else if (tr->parsed()) {
      train::RunConfig run = run_config(tr_flags);
      run.command = "train";
      const train::TrainResult result = train::train(run, print_epoch);
      const auto counts = model::count_parameters(result.weights);
      std::printf("trained %zu epochs, %lld inference parameters%s\n", result.history.size(),
                  static_cast<long long>(counts.inference_total),
                  result.reached_target ? ", target reached" : "");
      if (!result.history.empty()) {
        const auto& last = result.history.back();
        std::printf("final validation: OA %.4f  mIoU %.4f  mean F1 %.4f  kappa %.4f\n", last.val_oa,
                    last.val_miou, last.val_mean_f1, last.val_kappa);
      }
      if (!run.output_dir.empty()) std::printf("wrote %s/metrics.csv and %s/checkpoint\n",
                                               run.output_dir.c_str(), run.output_dir.c_str());
    } else if (ev->parsed()) {
      checkpoint::Loaded ck = checkpoint::load(ev_checkpoint);
      const io::DatasetManifest manifest = io::DatasetManifest::read(ev_manifest);
      if (manifest.num_classes != 0 && manifest.num_classes != ck.config.num_classes) {
        throw ConfigError("checkpoint predicts " + std::to_string(ck.config.num_classes) +
                          " classes, dataset has " + std::to_string(manifest.num_classes));
      }
      const auto samples = io::load_split(manifest, ev_split);
      if (samples.empty()) throw ConfigError("split '" + ev_split + "' is empty");
      const metrics::ConfusionMatrix cm = train::evaluate(ck.weights, ck.config, samples, ev_tta, ev_dump);
      std::vector<std::string> names;
      if (ck.config.num_classes == static_cast<std::int64_t>(io::kIsprsPalette.size())) {
        for (const auto& p : io::kIsprsPalette) names.emplace_back(p.name);
      }
      std::cout << metrics::report_text(cm, names);
      if (!ev_csv.empty()) emit(ev_csv, false, [&](bool) { return metrics::report_csv(cm, names); });
    } else if (ab->parsed()) {
      train::RunConfig run = run_config(ab_flags);
      run.command = "ablate";
      if (ab_flags.tta) run.tta = true;
      const auto rows = train::ablate(run);
      std::cout << train::ablation_text(rows);
      if (!ab_out.empty()) emit(ab_out, false, [&](bool) { return train::ablation_csv(rows); });
    } else if (gc->parsed()) {
      if (gc_list) {
        for (const auto& e : gradcheck_suite::registry()) {
          std::printf("%-24s %s\n", e.name.c_str(), e.category == gradcheck_suite::Category::op ? "op" : "block");
        }
        return 0;
      }
      const auto outcomes = gradcheck_suite::run(gc_filter);
      if (outcomes.empty()) throw ConfigError("no check matches '" + gc_filter + "'");
      std::cout << gradcheck_suite::report(outcomes, gc_tol);
      return gradcheck_suite::all_passed(outcomes, gc_tol) ? 0 : 1;
    } else if (sy->parsed()) {
      const io::DatasetManifest m = io::synth_shapes_dataset(sy_out, sy_count, sy_size, sy_classes, seed);
      std::printf("wrote %zu images to %s (manifest.tsv)\n", m.entries.size(), sy_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "abcnet: error: %s\n", e.what());
    return 2;
  }
  return 0;
}
