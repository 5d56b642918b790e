// Copyright 2026 The ABCNet-CPP Authors
// SPDX-License-Identifier: Apache-2.0

#include "abcnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace abcnet::checkpoint {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'A', 'B', 'C', 'N', 'E', 'T', 'W', '1'};

std::string join(const auto& values) {
  std::string out;
  for (auto v : values) {
    if (!out.empty()) out += ',';
    out += std::to_string(v);
  }
  return out;
}

std::vector<std::int64_t> split_ints(const std::string& key, const std::string& value) {
  std::vector<std::int64_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad integer list for " + key + ": '" + value + "'");
    }
  }
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& value) {
  const auto v = split_ints(key, value);
  if (v.size() != 1) throw ConfigError("expected one integer for " + key);
  return v[0];
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("expected true/false for " + key + ", got '" + value + "'");
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  const char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4));
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }
  std::uint64_t u64() {
    const auto* p = reinterpret_cast<const unsigned char*>(take(8));
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

struct Record {
  std::string name;
  Shape shape;
  const Tensor* value;
};

}  // namespace

std::map<std::string, std::string> config_entries(const model::ABCNetConfig& c) {
  return {
      {"num_classes", std::to_string(c.num_classes)},
      {"in_channels", std::to_string(c.in_channels)},
      {"spatial_channels", join(c.spatial.channels)},
      {"spatial_kernel", std::to_string(c.spatial.kernel)},
      {"stem_channels", std::to_string(c.backbone.stem_channels)},
      {"stage_channels", join(c.backbone.stage_channels)},
      {"blocks_per_stage", std::to_string(c.backbone.blocks_per_stage)},
      {"key_divisor", std::to_string(c.key_divisor)},
      {"context_channels", std::to_string(c.context_channels)},
      {"fam_channels", std::to_string(c.fam_channels)},
      {"head_channels", std::to_string(c.head_channels)},
      {"aux_channels", std::to_string(c.aux_channels)},
      {"fusion", std::string(model::fusion_name(c.fusion))},
      {"include_spatial_path", c.include_spatial_path ? "true" : "false"},
      {"include_aem", c.include_aem ? "true" : "false"},
  };
}

model::ABCNetConfig apply_config_entries(const std::map<std::string, std::string>& entries,
                                         model::ABCNetConfig c) {
  for (const auto& [key, value] : entries) {
    if (key == "num_classes") c.num_classes = to_int(key, value);
    else if (key == "in_channels") c.in_channels = to_int(key, value);
    else if (key == "spatial_channels") c.spatial.channels = split_ints(key, value);
    else if (key == "spatial_kernel") c.spatial.kernel = to_int(key, value);
    else if (key == "stem_channels") c.backbone.stem_channels = to_int(key, value);
    else if (key == "stage_channels") {
      const auto v = split_ints(key, value);
      if (v.size() != 4) throw ConfigError("stage_channels needs four values");
      std::copy(v.begin(), v.end(), c.backbone.stage_channels.begin());
    } else if (key == "blocks_per_stage") c.backbone.blocks_per_stage = to_int(key, value);
    else if (key == "key_divisor") c.key_divisor = to_int(key, value);
    else if (key == "context_channels") c.context_channels = to_int(key, value);
    else if (key == "fam_channels") c.fam_channels = to_int(key, value);
    else if (key == "head_channels") c.head_channels = to_int(key, value);
    else if (key == "aux_channels") c.aux_channels = to_int(key, value);
    else if (key == "fusion") c.fusion = model::parse_fusion(value);
    else if (key == "include_spatial_path") c.include_spatial_path = to_bool(key, value);
    else if (key == "include_aem") c.include_aem = to_bool(key, value);
    else throw ConfigError("unknown model key '" + key + "'");
  }
  c.validate();
  return c;
}

void save(const std::string& dir, const model::NetworkWeights& weights,
          const model::ABCNetConfig& cfg) {
  fs::create_directories(dir);
  std::vector<Record> records;
  for (std::size_t i = 0; i < weights.names().size(); ++i) {
    records.push_back({weights.names()[i], weights.values()[i].shape(), &weights.values()[i]});
  }
  for (const auto& [name, s] : weights.all_stats()) {
    records.push_back({name + ".running_mean", s.running_mean.shape(), &s.running_mean});
    records.push_back({name + ".running_var", s.running_var.shape(), &s.running_var});
  }
  std::string bin(kMagic, sizeof(kMagic));
  put_u32(bin, static_cast<std::uint32_t>(records.size()));
  std::string manifest = "# abcnet checkpoint v1\n";
  for (const auto& [k, v] : config_entries(cfg)) manifest += "config " + k + "=" + v + "\n";
  for (const Record& r : records) {
    manifest += "record " + r.name + " " + shape_str(r.shape) + " " + std::to_string(bin.size()) + "\n";
    put_u32(bin, static_cast<std::uint32_t>(r.name.size()));
    bin += r.name;
    put_u32(bin, static_cast<std::uint32_t>(r.shape.size()));
    for (std::int64_t d : r.shape) put_u64(bin, static_cast<std::uint64_t>(d));
    for (double v : r.value->data()) put_u32(bin, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::ofstream b(fs::path(dir) / "weights.bin", std::ios::binary);
  b.write(bin.data(), static_cast<std::streamsize>(bin.size()));
  std::ofstream m(fs::path(dir) / "manifest.txt");
  m << manifest;
  if (!b || !m) throw FormatError("failed to write checkpoint into " + dir);
}

Loaded load(const std::string& dir) {
  std::ifstream m(fs::path(dir) / "manifest.txt");
  if (!m) throw FormatError("no manifest.txt in checkpoint " + dir);
  std::map<std::string, std::string> entries;
  std::string line;
  while (std::getline(m, line)) {
    if (line.rfind("config ", 0) != 0) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad manifest line: " + line);
    entries[line.substr(7, eq - 7)] = line.substr(eq + 1);
  }
  const model::ABCNetConfig cfg = apply_config_entries(entries, model::ABCNetConfig::full());

  std::ifstream b(fs::path(dir) / "weights.bin", std::ios::binary);
  if (!b) throw FormatError("no weights.bin in checkpoint " + dir);
  Reader r(std::string((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>()));
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("weights.bin: bad magic");
  }
  Loaded out{cfg, model::NetworkWeights::init(cfg, 0)};
  std::set<std::string> seen;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    const std::string name(r.take(len), len);
    const std::uint32_t rank = r.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::int64_t>(r.u64()));
    Tensor* target = nullptr;
    if (out.weights.contains(name)) {
      target = &out.weights.get(name);
    } else {
      for (const char* suffix : {".running_mean", ".running_var"}) {
        const std::string sfx(suffix);
        if (name.size() > sfx.size() && name.compare(name.size() - sfx.size(), sfx.size(), sfx) == 0) {
          auto& stats = out.weights.stats(name.substr(0, name.size() - sfx.size()));
          target = sfx == ".running_mean" ? &stats.running_mean : &stats.running_var;
        }
      }
    }
    if (target == nullptr) throw FormatError("checkpoint record '" + name + "' is not in the model");
    if (target->shape() != shape) {
      throw FormatError("record '" + name + "' has extents " + shape_str(shape) + ", model expects " +
                        shape_str(target->shape()));
    }
    for (double& v : target->data()) v = static_cast<double>(std::bit_cast<float>(r.u32()));
    seen.insert(name);
  }
  if (!r.done()) throw FormatError("weights.bin has trailing bytes");
  const std::size_t expected = out.weights.names().size() + 2 * out.weights.all_stats().size();
  if (seen.size() != expected) {
    throw FormatError("checkpoint holds " + std::to_string(seen.size()) + " records, model needs " +
                      std::to_string(expected));
  }
  return out;
}

}  // namespace abcnet::checkpoint
