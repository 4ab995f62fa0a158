#include "sscae/data.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <limits>

namespace sscae {

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::idx: return "idx";
    case DataSource::cifar: return "cifar";
    case DataSource::synthetic: return "synthetic";
  }
  return "?";
}

template <typename T>
Tensor<T> Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t per = image_bytes();
  Tensor<T> out(indices.size(), shape.c, shape.h, shape.w);
  auto dst = out.data();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= shape.n)
      throw ShapeError("dataset index " + std::to_string(indices[b]) + " out of range " +
                       std::to_string(shape.n));
    const std::uint8_t* src = pixels.data() + indices[b] * per;
    for (std::size_t q = 0; q < per; ++q) dst[b * per + q] = static_cast<T>(src[q]) / T(255);
  }
  return out;
}

template <typename T>
Tensor<T> Dataset::images() const {
  std::vector<std::size_t> all(shape.n);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return batch<T>(all);
}

Dataset Dataset::head(std::size_t n) const {
  Dataset out;
  out.source = source;
  out.shape = shape;
  out.shape.n = std::min(n, shape.n);
  out.pixels.assign(pixels.begin(), pixels.begin() + static_cast<std::ptrdiff_t>(out.shape.n * image_bytes()));
  return out;
}

template Tensor<float> Dataset::batch<float>(std::span<const std::size_t>) const;
template Tensor<double> Dataset::batch<double>(std::span<const std::size_t>) const;
template Tensor<float> Dataset::images<float>() const;
template Tensor<double> Dataset::images<double>() const;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

namespace {

bool is_gzip(std::span<const std::uint8_t> b) { return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b; }

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> in) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError("gzip: inflateInit failed");
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 16];
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof chunk;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("gzip: corrupt or truncated stream");
    }
    out.insert(out.end(), chunk, chunk + (sizeof chunk - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw FormatError("gzip: truncated stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> raw) {
  std::vector<std::uint8_t> inflated;
  std::span<const std::uint8_t> bytes = raw;
  if (is_gzip(raw)) {
    inflated = gunzip(raw);
    bytes = inflated;
  }
  if (bytes.size() < 16)
    throw FormatError("idx: truncated header, expected 16 bytes, got " + std::to_string(bytes.size()));
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImageMagic) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", magic);
    throw FormatError(std::string("idx: wrong IDX rank/type (magic ") + buf +
                      ", expected 0x00000803)");
  }
  const std::uint64_t n = read_be32(bytes, 4);
  const std::uint64_t h = read_be32(bytes, 8);
  const std::uint64_t w = read_be32(bytes, 12);
  const std::uint64_t per = h * w;  // cannot overflow: both < 2^32
  if (per != 0 && n > (std::numeric_limits<std::uint64_t>::max() - 16) / per)
    throw FormatError("idx: dimensions overflow");
  const std::uint64_t expected = 16 + n * per;
  if (expected > std::numeric_limits<std::size_t>::max())
    throw FormatError("idx: dimensions overflow");
  if (bytes.size() != expected)
    throw FormatError("idx: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()) +
                      (bytes.size() < expected ? " (truncated)" : " (trailing data)"));
  Dataset d;
  d.source = DataSource::idx;
  d.shape = Shape{static_cast<std::size_t>(n), 1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
  d.pixels.assign(bytes.begin() + 16, bytes.end());
  return d;
}

Dataset load_idx(const std::filesystem::path& path) { return parse_idx(read_file(path)); }

std::vector<std::uint8_t> serialize_idx(const Dataset& data) {
  if (data.shape.c != 1) throw FormatError("idx: only single-channel datasets can be written");
  for (std::size_t d : {data.shape.n, data.shape.h, data.shape.w})
    if (d > std::numeric_limits<std::uint32_t>::max()) throw FormatError("idx: dimension too large");
  std::vector<std::uint8_t> out;
  out.reserve(16 + data.pixels.size());
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(data.shape.n));
  write_be32(out, static_cast<std::uint32_t>(data.shape.h));
  write_be32(out, static_cast<std::uint32_t>(data.shape.w));
  out.insert(out.end(), data.pixels.begin(), data.pixels.end());
  return out;
}

void save_idx(const Dataset& data, const std::filesystem::path& path) {
  const auto bytes = serialize_idx(data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Dataset parse_cifar10(std::span<const std::uint8_t> bytes) {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0)
    throw FormatError("cifar10: file size " + std::to_string(bytes.size()) +
                      " is not a positive multiple of " + std::to_string(kCifarRecordBytes));
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  Dataset d;
  d.source = DataSource::cifar;
  d.shape = Shape{n, 3, 32, 32};
  d.pixels.resize(n * 3072);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    std::copy(rec + 1, rec + kCifarRecordBytes, d.pixels.begin() + static_cast<std::ptrdiff_t>(r * 3072));
  }
  return d;
}

Dataset load_cifar10_bin(const std::filesystem::path& path) { return parse_cifar10(read_file(path)); }

// ---------------------------------------------------------------------------
// synthetic shapes

namespace {

struct Canvas {
  std::size_t h, w;
  std::uint8_t* px;

  void hline(long r, long c0, long c1, long width) {
    for (long dr = 0; dr < width; ++dr)
      for (long c = c0; c <= c1; ++c) set(r + dr, c);
  }
  void vline(long c, long r0, long r1, long width) {
    for (long dc = 0; dc < width; ++dc)
      for (long r = r0; r <= r1; ++r) set(r, c + dc);
  }
  void set(long r, long c) {
    if (r >= 0 && c >= 0 && r < static_cast<long>(h) && c < static_cast<long>(w))
      px[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] = 255;
  }
};

long pick(Rng& rng, long lo, long hi) {  // inclusive
  return lo + static_cast<long>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

}  // namespace

Dataset synth_shapes(std::size_t n, std::size_t height, std::size_t width, std::uint64_t seed) {
  if (height < 8 || width < 8) throw ConfigError("synth_shapes: images must be at least 8x8");
  Dataset d;
  d.source = DataSource::synthetic;
  d.shape = Shape{n, 1, height, width};
  d.pixels.assign(d.shape.size(), 0);
  Rng rng(seed);
  const long H = static_cast<long>(height);
  const long W = static_cast<long>(width);
  const long min_len = std::max(3L, std::min(H, W) / 3);
  const long max_len = std::max(min_len, 2 * std::min(H, W) / 3);
  for (std::size_t img = 0; img < n; ++img) {
    Canvas cv{height, width, d.pixels.data() + img * height * width};
    const long shapes = pick(rng, 1, 3);
    for (long s = 0; s < shapes; ++s) {
      const long kind = pick(rng, 0, 3);
      const long stroke = pick(rng, 1, 2);
      const long len = pick(rng, min_len, max_len);
      const long r0 = pick(rng, 0, H - 1 - std::min(H - 1, len - 1));
      const long c0 = pick(rng, 0, W - 1 - std::min(W - 1, len - 1));
      switch (kind) {
        case 0: {  // horizontal bar
          cv.hline(r0 + pick(rng, 0, len - 1), c0, c0 + len - 1, stroke);
          break;
        }
        case 1: {  // vertical bar
          cv.vline(c0 + pick(rng, 0, len - 1), r0, r0 + len - 1, stroke);
          break;
        }
        case 2: {  // corner: one horizontal and one vertical arm sharing an end
          const bool top = rng.below(2) == 0;
          const bool left = rng.below(2) == 0;
          const long row = top ? r0 : r0 + len - stroke;
          const long col = left ? c0 : c0 + len - stroke;
          cv.hline(row, c0, c0 + len - 1, stroke);
          cv.vline(col, r0, r0 + len - 1, stroke);
          break;
        }
        default: {  // cross
          const long mid_r = r0 + len / 2 - stroke / 2;
          const long mid_c = c0 + len / 2 - stroke / 2;
          cv.hline(mid_r, c0, c0 + len - 1, stroke);
          cv.vline(mid_c, r0, r0 + len - 1, stroke);
          break;
        }
      }
    }
  }
  return d;
}

}  // namespace sscae
