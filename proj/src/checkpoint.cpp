#include "sscae/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "sscae/data.hpp"

namespace sscae {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw FormatError("checkpoint: bad number '" + s + "' for " + key);
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  std::uint64_t v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw FormatError("checkpoint: bad integer '" + s + "' for " + key);
  return v;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, std::span<const T> values) {
  const std::size_t at = out.size();
  out.resize(at + values.size() * sizeof(T));
  if constexpr (std::endian::native == std::endian::little) {
    if (!values.empty()) std::memcpy(out.data() + at, values.data(), values.size() * sizeof(T));
  } else {
    for (std::size_t q = 0; q < values.size(); ++q) {
      using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
      const U bits = std::bit_cast<U>(values[q]);
      for (std::size_t b = 0; b < sizeof(T); ++b)
        out[at + q * sizeof(T) + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
  }
}

template <typename T>
void read_le(std::span<const std::uint8_t> in, std::span<T> values) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!values.empty()) std::memcpy(values.data(), in.data(), values.size() * sizeof(T));
  } else {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    for (std::size_t q = 0; q < values.size(); ++q) {
      U bits = 0;
      for (std::size_t b = 0; b < sizeof(T); ++b)
        bits |= static_cast<U>(in[q * sizeof(T) + b]) << (8 * b);
      values[q] = std::bit_cast<T>(bits);
    }
  }
}

struct ManifestEntry {
  std::string name;
  std::vector<std::size_t> shape;
  Precision precision = Precision::fp64;
  std::size_t offset = 0;

  std::size_t count() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }
};

std::string shape_text(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t q = 0; q < shape.size(); ++q) s += (q ? "," : "") + std::to_string(shape[q]);
  return s;
}

std::vector<std::size_t> parse_shape(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(parse_u64(part, "shape"));
  if (out.empty()) throw FormatError("checkpoint: empty tensor shape");
  return out;
}

}  // namespace

std::string config_to_text(const ModelConfig& c) {
  std::string t;
  t += "variant=" + to_string(c.variant) + "\n";
  t += "n_filters=" + std::to_string(c.n_filters) + "\n";
  t += "kernel_h=" + std::to_string(c.kernel_h) + "\n";
  t += "kernel_w=" + std::to_string(c.kernel_w) + "\n";
  t += "in_channels=" + std::to_string(c.in_channels) + "\n";
  t += "input_h=" + std::to_string(c.input_h) + "\n";
  t += "input_w=" + std::to_string(c.input_w) + "\n";
  t += "nonlinearity=" + to_string(c.nonlinearity) + "\n";
  t += "pooling=" +
       (c.pooling ? std::to_string(c.pooling->h) + "x" + std::to_string(c.pooling->w) : "none") +
       "\n";
  t += "lambda=" + fmt_double(c.lambda) + "\n";
  t += "norm_order=" + to_string(c.norm_order) + "\n";
  t += std::string("normalize=") + (c.normalize ? "1" : "0") + "\n";
  t += "eps=" + fmt_double(c.eps) + "\n";
  t += "recon=" + to_string(c.recon) + "\n";
  t += "precision=" + to_string(c.precision) + "\n";
  t += "seed=" + std::to_string(c.seed) + "\n";
  return t;
}

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const ModelConfig& config_in,
                                               const ModelState<T>& state) {
  ModelConfig config = config_in;
  config.precision = precision_of<T>();
  const std::string prec = to_string(config.precision);

  struct Item {
    std::string name;
    std::vector<std::size_t> shape;
    std::span<const T> data;
  };
  auto dims = [](const Shape& s) { return std::vector<std::size_t>{s.n, s.c, s.h, s.w}; };
  const Item items[] = {
      {"encoder.weights", dims(state.encoder.weights.shape()), state.encoder.weights.data()},
      {"encoder.bias", {state.encoder.bias.size()}, state.encoder.bias},
      {"decoder.weights", dims(state.decoder.weights.shape()), state.decoder.weights.data()},
      {"decoder.bias", {state.decoder.bias.size()}, state.decoder.bias},
  };

  std::string header = config_to_text(config);
  std::size_t offset = 0;
  for (const auto& it : items) {
    header += "tensor=" + it.name + " shape=" + shape_text(it.shape) + " precision=" + prec +
              " offset=" + std::to_string(offset) + "\n";
    offset += it.data.size() * sizeof(T);
  }

  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
  const auto len = static_cast<std::uint32_t>(header.size());
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(len >> (8 * b)));
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& it : items) append_le(out, it.data);
  return out;
}

namespace {

ModelConfig config_from_map(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("checkpoint: header lacks '" + key + "'");
    return it->second;
  };
  ModelConfig c;
  c.variant = variant_from_string(get("variant"));
  c.n_filters = parse_u64(get("n_filters"), "n_filters");
  c.kernel_h = parse_u64(get("kernel_h"), "kernel_h");
  c.kernel_w = parse_u64(get("kernel_w"), "kernel_w");
  c.in_channels = parse_u64(get("in_channels"), "in_channels");
  c.input_h = parse_u64(get("input_h"), "input_h");
  c.input_w = parse_u64(get("input_w"), "input_w");
  c.nonlinearity = activation_from_string(get("nonlinearity"));
  const std::string& pool = get("pooling");
  if (pool != "none") {
    const auto x = pool.find('x');
    if (x == std::string::npos) throw FormatError("checkpoint: bad pooling '" + pool + "'");
    c.pooling = Window{parse_u64(pool.substr(0, x), "pooling"), parse_u64(pool.substr(x + 1), "pooling")};
  }
  c.lambda = parse_double(get("lambda"), "lambda");
  c.norm_order = norm_order_from_string(get("norm_order"));
  c.normalize = get("normalize") == "1";
  c.eps = parse_double(get("eps"), "eps");
  c.recon = recon_norm_from_string(get("recon"));
  c.precision = precision_from_string(get("precision"));
  c.seed = parse_u64(get("seed"), "seed");
  return c;
}

template <typename T>
ModelState<T> state_from_manifest(const std::vector<ManifestEntry>& manifest,
                                  std::span<const std::uint8_t> payload, const ModelConfig& c) {
  ModelState<T> s;
  const Shape ws{c.n_filters, c.in_channels, c.kernel_h, c.kernel_w};
  s.encoder.weights = Tensor<T>(ws);
  s.encoder.bias.assign(c.n_filters, T(0));
  s.decoder.weights = Tensor<T>(ws);
  s.decoder.bias.assign(c.in_channels, T(0));
  const std::map<std::string, std::span<T>> targets = {
      {"encoder.weights", s.encoder.weights.data()},
      {"encoder.bias", s.encoder.bias},
      {"decoder.weights", s.decoder.weights.data()},
      {"decoder.bias", s.decoder.bias},
  };
  if (manifest.size() != targets.size())
    throw FormatError("checkpoint: expected 4 tensors, found " + std::to_string(manifest.size()));
  for (const auto& e : manifest) {
    auto it = targets.find(e.name);
    if (it == targets.end()) throw FormatError("checkpoint: unknown tensor '" + e.name + "'");
    if (e.precision != precision_of<T>())
      throw FormatError("checkpoint: tensor '" + e.name + "' precision disagrees with config");
    if (e.count() != it->second.size())
      throw FormatError("checkpoint: tensor '" + e.name + "' has " + std::to_string(e.count()) +
                        " values, config implies " + std::to_string(it->second.size()));
    const std::size_t bytes = e.count() * sizeof(T);
    if (e.offset > payload.size() || payload.size() - e.offset < bytes)
      throw FormatError("checkpoint: payload truncated in tensor '" + e.name + "'");
    read_le<T>(payload.subspan(e.offset, bytes), it->second);
  }
  return s;
}

}  // namespace

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw FormatError("checkpoint: missing SSCAE001 magic");
  std::uint32_t len = 0;
  for (int b = 0; b < 4; ++b) len |= std::uint32_t{bytes[8 + b]} << (8 * b);
  if (bytes.size() - 12 < len) throw FormatError("checkpoint: truncated header");
  const std::string header(reinterpret_cast<const char*>(bytes.data() + 12), len);
  const auto payload = bytes.subspan(12 + len);

  std::map<std::string, std::string> kv;
  std::vector<ManifestEntry> manifest;
  std::stringstream ss(header);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    if (line.rfind("tensor=", 0) == 0) {
      ManifestEntry e;
      std::stringstream ls(line);
      std::string field;
      while (ls >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw FormatError("checkpoint: bad manifest field '" + field + "'");
        const std::string k = field.substr(0, eq), v = field.substr(eq + 1);
        if (k == "tensor") e.name = v;
        else if (k == "shape") e.shape = parse_shape(v);
        else if (k == "precision") e.precision = precision_from_string(v);
        else if (k == "offset") e.offset = parse_u64(v, "offset");
        else throw FormatError("checkpoint: unknown manifest field '" + k + "'");
      }
      manifest.push_back(std::move(e));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint: bad header line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }

  Checkpoint ck;
  ck.config = config_from_map(kv);
  ck.config.validate();
  if (ck.config.precision == Precision::fp32)
    ck.state = state_from_manifest<float>(manifest, payload, ck.config);
  else
    ck.state = state_from_manifest<double>(manifest, payload, ck.config);
  return ck;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelState<T>& state) {
  const auto bytes = serialize_checkpoint(config, state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FormatError("checkpoint not found: " + path.string());
  return parse_checkpoint(read_file(path));
}

template std::vector<std::uint8_t> serialize_checkpoint(const ModelConfig&, const ModelState<float>&);
template std::vector<std::uint8_t> serialize_checkpoint(const ModelConfig&, const ModelState<double>&);
template void save_checkpoint(const std::filesystem::path&, const ModelConfig&, const ModelState<float>&);
template void save_checkpoint(const std::filesystem::path&, const ModelConfig&, const ModelState<double>&);

}  // namespace sscae
