// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikedrive/container.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <set>

#include "spikedrive/errors.hpp"

namespace spikedrive {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

json config_to_json(const ModelConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.conv_blocks) blocks.push_back({{"out_channels", b.out_channels}, {"maxpool", b.maxpool}});
  return {{"image", {c.channels, c.height, c.width}},
          {"conv_blocks", blocks},
          {"kernel_size", c.kernel_size},
          {"embed_dim", c.embed_dim},
          {"blocks", c.blocks},
          {"heads", c.heads},
          {"mlp_ratio", c.mlp_ratio},
          {"classes", c.classes},
          {"quant_levels", c.quant_levels},
          {"bn_eps", c.bn_eps},
          {"tokens", c.tokens()}};
}

ModelConfig config_from_json(const json& j) {
  static const std::set<std::string> known{"image",  "conv_blocks", "kernel_size", "embed_dim",
                                           "blocks", "heads",       "mlp_ratio",   "classes",
                                           "quant_levels", "bn_eps", "tokens"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  ModelConfig c;
  try {
    const auto image = j.at("image").get<std::vector<std::size_t>>();
    if (image.size() != 3) throw ConfigError("config image must be [C, H, W]");
    c.channels = image[0];
    c.height = image[1];
    c.width = image[2];
    c.conv_blocks.clear();
    for (const auto& b : j.at("conv_blocks")) {
      c.conv_blocks.push_back({b.at("out_channels").get<std::size_t>(), b.value("maxpool", false)});
    }
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.blocks = j.at("blocks").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.classes = j.at("classes").get<std::size_t>();
    c.quant_levels = j.at("quant_levels").get<int>();
    c.bn_eps = j.value("bn_eps", c.bn_eps);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  if (j.contains("tokens") && j.at("tokens").get<std::size_t>() != c.tokens()) {
    throw ConfigError("config tokens " + j.at("tokens").dump() + " disagrees with derived " +
                      std::to_string(c.tokens()));
  }
  return c;
}

ModelConfig load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + file.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

namespace container {
namespace {

// ---------------------------------------------------------------------------
// Tensor directory shared by save and load

struct Slot {
  std::string name;
  Shape shape;
  Tensor* tensor;
};

std::string bn_name(const std::string& prefix, const char* field) { return prefix + ".bn." + field; }

/// Every non-BN tensor the config implies, in canonical order.
std::vector<Slot> tensor_slots(TailoredModel& m) {
  const auto& c = m.config;
  std::vector<Slot> out;
  std::size_t in_ch = c.channels;
  for (std::size_t i = 0; i < m.tokenizer.size(); ++i) {
    auto& st = m.tokenizer[i];
    const std::string p = "tok" + std::to_string(i) + ".conv";
    const std::size_t oc = c.conv_blocks[i].out_channels;
    out.push_back({p + ".weight", {oc, in_ch, c.kernel_size, c.kernel_size}, &st.conv.kernel});
    out.push_back({p + ".bias", {oc}, &st.conv.bias});
    in_ch = oc;
  }
  const std::size_t d = c.embed_dim, hidden = d * c.mlp_ratio;
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    auto& blk = m.blocks[b];
    const std::string p = "blk" + std::to_string(b) + ".";
    const std::tuple<const char*, Dense*, std::size_t, std::size_t> layers[] = {
        {"q", &blk.query, d, d},        {"k", &blk.key, d, d},        {"v", &blk.value, d, d},
        {"proj", &blk.proj, d, d},      {"fc1", &blk.fc1, hidden, d}, {"fc2", &blk.fc2, d, hidden}};
    for (auto [leaf, dense, o, i] : layers) {
      out.push_back({p + leaf + ".weight", {o, i}, &dense->weight});
      out.push_back({p + leaf + ".bias", {o}, &dense->bias});
    }
  }
  out.push_back({"head.weight", {c.classes, d}, &m.head.weight});
  out.push_back({"head.bias", {c.classes}, &m.head.bias});
  return out;
}

struct BnSlot {
  std::string prefix;  // e.g. tok0 or blk1.q
  std::optional<BNParams>* bn;
  std::size_t channels;
};

std::vector<BnSlot> bn_slots(TailoredModel& m) {
  const auto& c = m.config;
  std::vector<BnSlot> out;
  for (std::size_t i = 0; i < m.tokenizer.size(); ++i) {
    out.push_back({"tok" + std::to_string(i), &m.tokenizer[i].bn, c.conv_blocks[i].out_channels});
  }
  const std::size_t d = c.embed_dim, hidden = d * c.mlp_ratio;
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    auto& blk = m.blocks[b];
    const std::string p = "blk" + std::to_string(b) + ".";
    const std::tuple<const char*, Dense*, std::size_t> layers[] = {
        {"q", &blk.query, d}, {"k", &blk.key, d}, {"v", &blk.value, d},
        {"proj", &blk.proj, d}, {"fc1", &blk.fc1, hidden}, {"fc2", &blk.fc2, d}};
    for (auto [leaf, dense, ch] : layers) out.push_back({p + leaf, &dense->bn, ch});
  }
  return out;
}

constexpr const char* kBnFields[] = {"gamma", "beta", "mean", "var"};

std::vector<double>& bn_field(BNParams& bn, int i) {
  switch (i) {
    case 0: return bn.gamma;
    case 1: return bn.beta;
    case 2: return bn.mean;
    default: return bn.var;
  }
}

TailoredModel skeleton(const ModelConfig& config) {
  TailoredModel m;
  m.config = config;
  m.tokenizer.resize(config.conv_blocks.size());
  const std::size_t k = config.kernel_size;
  for (std::size_t i = 0; i < m.tokenizer.size(); ++i) {
    m.tokenizer[i].maxpool = config.conv_blocks[i].maxpool;
    m.tokenizer[i].conv.stride = {1, 1};
    m.tokenizer[i].conv.padding = {k / 2, k / 2};
  }
  m.blocks.resize(config.blocks);
  return m;
}

// ---------------------------------------------------------------------------
// Little-endian float32 encoding

void append_f32(std::string& blob, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double read_f32(const std::string& blob, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + i])) << (8 * i);
  }
  return static_cast<double>(std::bit_cast<float>(bits));
}

// ---------------------------------------------------------------------------
// Save

struct Writer {
  json tensors = json::array();
  std::string blob;

  void put(const std::string& name, const Shape& shape, std::span<const double> values) {
    if (shape_product(shape) != values.size()) {
      throw ShapeMismatchError("tensor " + name + " holds " + std::to_string(values.size()) +
                               " values, expected shape " + shape_to_string(shape));
    }
    const std::size_t offset = blob.size();
    for (double v : values) {
      if (!std::isfinite(v) || std::abs(v) > std::numeric_limits<float>::max()) {
        throw NumericError("tensor " + name + " has a value not representable as float32");
      }
      append_f32(blob, v);
    }
    tensors.push_back({{"name", name}, {"dtype", "f32"}, {"shape", shape}, {"offset", offset},
                       {"length", blob.size() - offset}});
  }
};

json quantizers_json(const TailoredModel& m) {
  json q = json::object();
  for (const auto& site : activation_sites(m.config)) {
    auto it = m.quantizers.find(site);
    if (it == m.quantizers.end() || !it->second.valid()) {
      throw IncompleteModelError("cannot save: quantizer site " + site + " has no valid step");
    }
    q[site] = {{"s", it->second.step}, {"L", it->second.levels}};
  }
  return q;
}

json base_manifest(const TailoredModel& model, Writer& w, Kind kind, const json& metadata) {
  model.config.validate();
  TailoredModel copy = model;
  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["kind"] = kind == Kind::Ann ? "ann" : "spiking";
  manifest["config"] = config_to_json(model.config);
  manifest["quantizers"] = quantizers_json(model);
  for (auto& slot : tensor_slots(copy)) w.put(slot.name, slot.shape, slot.tensor->data());
  for (auto& slot : bn_slots(copy)) {
    if (!*slot.bn) continue;
    for (int f = 0; f < 4; ++f) {
      w.put(bn_name(slot.prefix, kBnFields[f]), {slot.channels}, bn_field(**slot.bn, f));
    }
  }
  if (!metadata.is_null() && !metadata.empty()) manifest["metadata"] = metadata;
  return manifest;
}

void write_files(const fs::path& dir, json manifest, const Writer& w) {
  manifest["tensors"] = w.tensors;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create container directory " + dir.string() + ": " + ec.message());
  {
    std::ofstream blob(dir / kBlobFile, std::ios::binary | std::ios::trunc);
    if (!blob) throw IoError("cannot write " + (dir / kBlobFile).string());
    blob.write(w.blob.data(), static_cast<std::streamsize>(w.blob.size()));
    if (!blob) throw IoError("failed writing " + (dir / kBlobFile).string());
  }
  std::ofstream out(dir / kManifestFile, std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / kManifestFile).string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + (dir / kManifestFile).string());
}

// ---------------------------------------------------------------------------
// Load

std::string read_file(const fs::path& p, bool binary) {
  std::ifstream in(p, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Entry {
  Shape shape;
  std::size_t offset = 0, length = 0;
  bool used = false;
};

template <class T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw FormatError(where + " is missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(where + " has a malformed '" + key + "': " + e.what());
  }
}

std::vector<double> read_values(const std::string& blob, const Entry& e) {
  std::vector<double> v(e.length / 4);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = read_f32(blob, e.offset + 4 * i);
  return v;
}

void parse_thresholds(const json& manifest, Loaded& out) {
  SpikingModel sm;
  sm.network = out.model;
  sm.time_window = field<int>(manifest, "time_window", "spiking manifest");
  const json& thresholds = manifest.contains("thresholds") ? manifest.at("thresholds") : json();
  if (!thresholds.is_object()) throw FormatError("spiking manifest is missing 'thresholds'");
  for (const auto& site : activation_sites(out.model.config)) {
    if (!thresholds.contains(site)) throw IncompleteModelError("spiking container has no threshold for site " + site);
    const json& t = thresholds.at(site);
    const std::string where = "threshold " + site;
    NeuronLayer layer;
    layer.site = site;
    auto kind = parse_neuron_kind(field<std::string>(t, "kind", where));
    if (!kind) throw FormatError(where + " has unknown kind " + t.at("kind").dump());
    layer.kind = *kind;
    layer.threshold = field<double>(t, "theta", where);
    layer.firing_threshold = field<double>(t, "theta_prime", where);
    layer.absorbed_scale = field<double>(t, "absorbed_scale", where);
    for (const auto& p : t.value("presynaptic", json::array())) {
      layer.presynaptic.push_back({field<std::string>(p, "site", where), field<double>(p, "theta", where)});
    }
    if (!(layer.threshold > 0.0) || !(layer.firing_threshold > 0.0)) {
      throw FormatError(where + " must be positive");
    }
    sm.neurons.push_back(std::move(layer));
  }
  for (const auto& [site, value] : thresholds.items()) {
    auto sites = activation_sites(out.model.config);
    if (std::find(sites.begin(), sites.end(), site) == sites.end()) {
      out.warnings.push_back("unknown threshold site " + site + " ignored");
    }
  }
  for (const auto& s : manifest.value("tdec_sites", json::array())) {
    TdecSite site;
    auto kind = parse_tdec_kind(field<std::string>(s, "kind", "tdec site"));
    if (!kind) throw FormatError("tdec site has unknown kind " + s.at("kind").dump());
    site.kind = *kind;
    site.name = field<std::string>(s, "name", "tdec site");
    site.lhs = field<std::string>(s, "lhs", "tdec site " + site.name);
    site.rhs = s.value("rhs", "");
    if (s.contains("window")) {
      const auto w = field<std::vector<std::size_t>>(s, "window", "tdec site " + site.name);
      const auto st = field<std::vector<std::size_t>>(s, "stride", "tdec site " + site.name);
      if (w.size() != 2 || st.size() != 2) throw FormatError("tdec site " + site.name + " window/stride must have 2 entries");
      site.pool.window = {w[0], w[1]};
      site.pool.stride = {st[0], st[1]};
    }
    sm.tdec_sites.push_back(std::move(site));
  }
  out.spiking = std::move(sm);
}

}  // namespace

void save(const TailoredModel& model, const fs::path& dir, const json& metadata) {
  Writer w;
  json manifest = base_manifest(model, w, Kind::Ann, metadata);
  write_files(dir, std::move(manifest), w);
}

void save(const SpikingModel& model, const fs::path& dir, const json& metadata) {
  if (model.network.batch_norm_count() != 0) throw ConversionError("spiking model still contains batch norms");
  Writer w;
  json manifest = base_manifest(model.network, w, Kind::Spiking, metadata);
  manifest["time_window"] = model.time_window;
  json thresholds = json::object();
  for (const auto& n : model.neurons) {
    json pre = json::array();
    for (const auto& p : n.presynaptic) pre.push_back({{"site", p.site}, {"theta", p.threshold}});
    thresholds[n.site] = {{"kind", std::string(to_string(n.kind))},
                          {"theta", n.threshold},
                          {"theta_prime", n.firing_threshold},
                          {"absorbed_scale", n.absorbed_scale},
                          {"presynaptic", pre}};
  }
  manifest["thresholds"] = thresholds;
  json tdec = json::array();
  for (const auto& s : model.tdec_sites) {
    json entry = {{"kind", std::string(to_string(s.kind))}, {"name", s.name}, {"lhs", s.lhs}, {"rhs", s.rhs}};
    if (s.kind == TdecKind::MaxPool) {
      entry["window"] = {s.pool.window.first, s.pool.window.second};
      entry["stride"] = {s.pool.stride.first, s.pool.stride.second};
    }
    tdec.push_back(std::move(entry));
  }
  manifest["tdec_sites"] = tdec;
  write_files(dir, std::move(manifest), w);
}

namespace {

struct RawContainer {
  json manifest;
  std::string blob;
  std::map<std::string, Entry> entries;
};

RawContainer read_raw(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("container " + dir.string() + " is not a directory");
  RawContainer raw;
  const std::string text = read_file(dir / kManifestFile, false);
  raw.blob = read_file(dir / kBlobFile, true);
  try {
    raw.manifest = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("manifest is not valid JSON: " + std::string(e.what()));
  }
  const json& manifest = raw.manifest;
  if (!manifest.is_object()) throw FormatError("manifest must be a JSON object");
  const int version = field<int>(manifest, "format_version", "manifest");
  if (version != kFormatVersion) throw FormatError("unsupported container format_version " + std::to_string(version));

  // Tensor directory: ascending, non-overlapping, inside the blob.
  if (!manifest.contains("tensors") || !manifest.at("tensors").is_array()) {
    throw FormatError("manifest is missing the 'tensors' list");
  }
  std::size_t cursor = 0;
  for (const auto& t : manifest.at("tensors")) {
    const std::string name = field<std::string>(t, "name", "tensor entry");
    const std::string where = "tensor " + name;
    const std::string dtype = field<std::string>(t, "dtype", where);
    if (dtype != "f32") throw FormatError(where + " has unsupported dtype " + dtype);
    Entry e;
    e.shape = field<Shape>(t, "shape", where);
    e.offset = field<std::size_t>(t, "offset", where);
    e.length = field<std::size_t>(t, "length", where);
    if (e.length != 4 * shape_product(e.shape)) {
      throw FormatError(where + " length " + std::to_string(e.length) + " does not match shape " +
                        shape_to_string(e.shape));
    }
    if (e.offset < cursor) throw OffsetOverflowError(where + " overlaps the previous tensor");
    if (e.offset > raw.blob.size() || e.length > raw.blob.size() - e.offset) {
      throw OffsetOverflowError(where + " bytes [" + std::to_string(e.offset) + ", " +
                                std::to_string(e.offset + e.length) + ") exceed blob size " +
                                std::to_string(raw.blob.size()));
    }
    cursor = e.offset + e.length;
    if (!raw.entries.emplace(name, e).second) throw FormatError("duplicate tensor " + name);
  }
  return raw;
}

}  // namespace

std::map<std::string, Tensor> read_tensors(const fs::path& dir) {
  const RawContainer raw = read_raw(dir);
  std::map<std::string, Tensor> out;
  for (const auto& [name, e] : raw.entries) out.emplace(name, Tensor(e.shape, read_values(raw.blob, e)));
  return out;
}

Loaded load(const fs::path& dir) {
  RawContainer raw = read_raw(dir);
  const json& manifest = raw.manifest;
  const std::string& blob = raw.blob;
  auto& entries = raw.entries;

  Loaded out;
  const std::string kind = field<std::string>(manifest, "kind", "manifest");
  if (kind == "ann") {
    out.kind = Kind::Ann;
  } else if (kind == "spiking") {
    out.kind = Kind::Spiking;
  } else {
    throw FormatError("unknown container kind '" + kind + "'");
  }
  static const std::set<std::string> known{"format_version", "kind",        "config",     "tensors", "quantizers",
                                           "metadata",       "time_window", "thresholds", "tdec_sites"};
  for (const auto& [key, value] : manifest.items()) {
    if (!known.count(key)) out.warnings.push_back("unknown manifest key '" + key + "' ignored");
  }
  if (!manifest.contains("config")) throw FormatError("manifest is missing 'config'");
  ModelConfig config;
  try {
    config = config_from_json(manifest.at("config"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("manifest config: ") + e.what());
  }
  if (manifest.contains("metadata")) out.metadata = manifest.at("metadata");

  TailoredModel m = skeleton(config);
  for (auto& slot : tensor_slots(m)) {
    auto it = entries.find(slot.name);
    if (it == entries.end()) throw IncompleteModelError("container is missing tensor " + slot.name);
    if (it->second.shape != slot.shape) {
      throw ShapeMismatchError("tensor " + slot.name + " has shape " + shape_to_string(it->second.shape) +
                               ", config implies " + shape_to_string(slot.shape));
    }
    *slot.tensor = Tensor(slot.shape, read_values(blob, it->second));
    it->second.used = true;
  }
  for (auto& slot : bn_slots(m)) {
    int present = 0;
    for (const char* f : kBnFields) present += entries.count(bn_name(slot.prefix, f)) ? 1 : 0;
    if (present == 0) continue;
    if (present != 4) throw IncompleteModelError("batch norm " + slot.prefix + ".bn is missing some of gamma/beta/mean/var");
    BNParams bn;
    bn.eps = config.bn_eps;
    for (int f = 0; f < 4; ++f) {
      const std::string name = bn_name(slot.prefix, kBnFields[f]);
      Entry& e = entries.at(name);
      if (e.shape != Shape{slot.channels}) {
        throw ShapeMismatchError("tensor " + name + " has shape " + shape_to_string(e.shape) + ", config implies " +
                                 shape_to_string({slot.channels}));
      }
      bn_field(bn, f) = read_values(blob, e);
      e.used = true;
    }
    *slot.bn = std::move(bn);
  }
  for (const auto& [name, e] : entries) {
    if (!e.used) out.warnings.push_back("unknown tensor " + name + " ignored");
  }

  if (!manifest.contains("quantizers") || !manifest.at("quantizers").is_object()) {
    throw FormatError("manifest is missing the 'quantizers' table");
  }
  const json& quant = manifest.at("quantizers");
  const auto sites = activation_sites(config);
  for (const auto& site : sites) {
    if (!quant.contains(site)) throw IncompleteModelError("container is missing quantizer site " + site);
    const json& q = quant.at(site);
    QuantParams p{field<double>(q, "s", "quantizer " + site), field<int>(q, "L", "quantizer " + site)};
    if (!p.valid()) throw FormatError("quantizer " + site + " needs s > 0 and L >= 1");
    m.quantizers[site] = p;
  }
  for (const auto& [site, value] : quant.items()) {
    if (std::find(sites.begin(), sites.end(), site) == sites.end()) {
      out.warnings.push_back("unknown quantizer site " + site + " ignored");
    }
  }

  out.model = std::move(m);
  if (out.kind == Kind::Spiking) {
    if (out.model.batch_norm_count() != 0) throw FormatError("spiking container holds batch norm tensors");
    parse_thresholds(manifest, out);
  }
  return out;
}

TailoredModel load_model(const fs::path& dir, std::vector<std::string>* warnings) {
  Loaded l = load(dir);
  if (l.kind != Kind::Ann) throw FormatError(dir.string() + " is a spiking container; expected an ANN container");
  if (warnings) *warnings = std::move(l.warnings);
  return std::move(l.model);
}

SpikingModel load_spiking(const fs::path& dir, std::vector<std::string>* warnings) {
  Loaded l = load(dir);
  if (l.kind != Kind::Spiking) throw FormatError(dir.string() + " is an ANN container; expected a spiking container");
  if (warnings) *warnings = std::move(l.warnings);
  return std::move(*l.spiking);
}

}  // namespace container
}  // namespace spikedrive
