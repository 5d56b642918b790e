// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "abcnet/bench.hpp"
#include "abcnet/checkpoint.hpp"
#include "abcnet/csv.hpp"
#include "abcnet/dataset.hpp"
#include "abcnet/train.hpp"

using namespace abcnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("abcnet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> header_of(const std::string& csv_text) {
  return csv::parse_row(csv_text.substr(0, csv_text.find("\r\n")));
}

}  // namespace

TEST_SUITE("run-config") {
  TEST_CASE("set parses every field") {
    train::RunConfig r;
    r.set("seed", "9");
    r.set("precision", "f64");
    r.set("model", "mini");
    r.set("epochs", "3");
    r.set("batch_size", "2");
    r.set("learning_rate", "1e-3");
    r.set("augment", "off");
    r.set("stop_oa", "0.9");
    r.set("model.num_classes", "4");
    CHECK(r.seed == 9);
    CHECK(r.precision == model::Precision::f64);
    CHECK(r.epochs == 3);
    CHECK(r.learning_rate == 1e-3);
    CHECK_FALSE(r.augment);
    CHECK(r.model_config().num_classes == 4);
    CHECK(r.model_config().backbone.stage_channels == model::ABCNetConfig::mini().backbone.stage_channels);
  }

  TEST_CASE("bad keys and values") {
    train::RunConfig r;
    CHECK_THROWS_AS(r.set("epoch", "3"), ConfigError);
    CHECK_THROWS_AS(r.set("epochs", "three"), ConfigError);
    CHECK_THROWS_AS(r.set("augment", "maybe"), ConfigError);
    CHECK_THROWS_AS(r.set("precision", "f16"), ConfigError);
    r.set("model.depth", "3");
    CHECK_THROWS_AS((void)r.model_config(), ConfigError);
  }

  TEST_CASE("config file, later assignments win") {
    const fs::path dir = scratch("runcfg");
    std::ofstream(dir / "a.cfg") << "# comment\nepochs=5\n\nbatch_size = 8\nepochs=7\n";
    train::RunConfig r;
    r.load_file((dir / "a.cfg").string());
    CHECK(r.epochs == 7);
    CHECK(r.batch_size == 8);
    r.set("epochs", "2");
    CHECK(r.epochs == 2);
    std::ofstream(dir / "b.cfg") << "epochs\n";
    CHECK_THROWS_AS(r.load_file((dir / "b.cfg").string()), ConfigError);
    CHECK_THROWS_AS(r.load_file((dir / "none.cfg").string()), ConfigError);
  }
}

TEST_SUITE("bench") {
  TEST_CASE("median and slope") {
    CHECK(bench::median({3, 1, 2}) == 2);
    CHECK(bench::median({4, 1, 2, 3}) == 2.5);
    const std::vector<double> x{1, 2, 4, 8}, y{3, 12, 48, 192};
    CHECK(*bench::fit_loglog_slope(x, y) == doctest::Approx(2.0).epsilon(1e-12));
    const std::vector<double> one{1};
    CHECK_FALSE(bench::fit_loglog_slope(one, one).has_value());
  }

  TEST_CASE("small attention sweep") {
    bench::AttentionBenchOptions o;
    o.sizes = {64, 128, 256};
    o.repetitions = 1;
    o.min_rep_seconds = 0;
    const auto records = bench::bench_attention(o);
    CHECK(records.size() == 6);
    for (const auto& r : records) {
      CHECK_FALSE(r.skipped);
      CHECK(r.wall_seconds > 0);
      CHECK(r.flops == attention::count_cost(r.kernel, r.n, 32, 64).flops);
    }
    const auto slopes = bench::attention_slopes(records);
    CHECK(slopes.size() == 2);
    const std::string text = bench::attention_csv(records, slopes);
    CHECK(header_of(text) == std::vector<std::string>{"record", "kernel", "n", "key_dim", "value_dim", "flops",
                                                      "peak_intermediates", "peak_bytes", "wall_seconds",
                                                      "repetitions", "slope", "note"});
    CHECK(text.find("slope,dot_product") != std::string::npos);
  }

  TEST_CASE("budget produces skip rows") {
    bench::AttentionBenchOptions o;
    o.sizes = {128};
    o.repetitions = 1;
    o.memory_budget = 1000;
    o.kinds = {attention::Kind::linear};
    const auto records = bench::bench_attention(o);
    REQUIRE(records.size() == 1);
    CHECK(records[0].skipped);
    CHECK(bench::attention_csv(records, {}, false).rfind("skip,", 0) == 0);
  }

  TEST_CASE("fps rejects odd resolutions and reports macs") {
    bench::FpsBenchOptions o;
    o.config = model::ABCNetConfig::mini();
    o.resolutions = {48};
    CHECK_THROWS_AS(bench::bench_fps(o), ConfigError);
    o.resolutions = {64};
    o.repetitions = 1;
    const auto r = bench::bench_fps(o);
    REQUIRE(r.size() == 1);
    CHECK(r[0].macs > 0);
    CHECK(r[0].parameters == 940990);
    CHECK(header_of(bench::fps_csv(r)) == std::vector<std::string>{"resolution", "seconds_per_frame", "fps",
                                                                   "repetitions", "macs", "parameters", "status",
                                                                   "note"});
  }
}

TEST_SUITE("train") {
  TEST_CASE("epoch csv") {
    train::EpochMetrics m;
    m.epoch = 3;
    m.val_oa = 0.5;
    const auto fields = csv::parse_row(train::epoch_csv_row(m).substr(0, train::epoch_csv_row(m).size() - 2));
    CHECK(fields.size() == header_of(train::epoch_csv_header()).size());
    CHECK(fields[0] == "3");
    CHECK(fields[2] == "0.5");
  }

  TEST_CASE("argmax masks") {
    Tensor l({1, 3, 1, 2});
    l.at(0, 2, 0, 0) = 1;
    l.at(0, 1, 0, 1) = 1;
    const auto m = train::argmax_masks(l);
    REQUIRE(m.size() == 1);
    CHECK(m[0].at(0, 0) == 2);
    CHECK(m[0].at(1, 0) == 1);
  }

  TEST_CASE("short training runs are reproducible") {
    const fs::path dir = scratch("train");
    io::synth_shapes_dataset((dir / "data").string(), 4, 32, 3, 5);
    train::RunConfig r;
    r.model = "mini";
    r.model_overrides["num_classes"] = "3";
    r.manifest = (dir / "data" / "manifest.tsv").string();
    r.epochs = 2;
    r.batch_size = 2;
    r.learning_rate = 2e-3;
    r.output_dir = (dir / "a").string();
    const auto a = train::train(r);
    r.output_dir = (dir / "b").string();
    const auto b = train::train(r);
    CHECK(a.history.size() == 2);
    CHECK(std::isfinite(a.history.back().train_loss));
    const std::string ca = slurp(dir / "a" / "metrics.csv");
    CHECK(ca == slurp(dir / "b" / "metrics.csv"));
    CHECK(ca.find("epoch,train_loss") == 0);
    const auto loaded = checkpoint::load((dir / "a" / "checkpoint").string());
    CHECK(loaded.config.num_classes == 3);

    const auto manifest = io::DatasetManifest::read(r.manifest);
    const auto val = io::load_split(manifest, "val");
    model::NetworkWeights wa = a.weights, wl = loaded.weights;
    CHECK(train::evaluate(wa, a.config, val, false) == train::evaluate(wl, loaded.config, val, false));

    r.model_overrides["num_classes"] = "5";
    CHECK_THROWS_AS(train::train(r), ConfigError);
  }
}
