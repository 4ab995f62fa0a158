#include "sscae/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sscae/error.hpp"

namespace sscae {

std::vector<std::uint8_t> minmax_to_bytes(std::span<const double> values) {
  std::vector<std::uint8_t> out(values.size(), 128);
  if (values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return out;
  for (std::size_t q = 0; q < values.size(); ++q)
    out[q] = static_cast<std::uint8_t>(std::lround(255.0 * (values[q] - lo) / (hi - lo)));
  return out;
}

namespace {

void write_pnm(const std::filesystem::path& path, const char* magic, std::size_t width,
               std::size_t height, std::size_t channels, std::span<const std::uint8_t> data) {
  if (data.size() != width * height * channels)
    throw ShapeError("image " + path.string() + ": " + std::to_string(data.size()) +
                     " bytes for " + std::to_string(width) + "x" + std::to_string(height));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << magic << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> gray) {
  write_pnm(path, "P5", width, height, 1, gray);
}

void write_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> rgb) {
  write_pnm(path, "P6", width, height, 3, rgb);
}

void write_planar_image(const std::filesystem::path& path, std::size_t channels, std::size_t height,
                        std::size_t width, std::span<const double> planar) {
  if (planar.size() != channels * height * width)
    throw ShapeError("planar image: size does not match " + std::to_string(channels) + "x" +
                     std::to_string(height) + "x" + std::to_string(width));
  const auto bytes = minmax_to_bytes(planar);
  if (channels == 1) {
    write_pgm(path, width, height, bytes);
    return;
  }
  if (channels != 3)
    throw ShapeError("planar image: only 1 or 3 channels can be written, got " +
                     std::to_string(channels));
  const std::size_t plane = height * width;
  std::vector<std::uint8_t> rgb(3 * plane);
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < 3; ++c) rgb[3 * p + c] = bytes[c * plane + p];
  write_ppm(path, width, height, rgb);
}

PnmImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  PnmImage img;
  int maxval = 0;
  in >> img.magic >> img.width >> img.height >> maxval;
  if (!in || (img.magic != "P5" && img.magic != "P6") || maxval != 255)
    throw FormatError("pnm: unsupported header in " + path.string());
  in.get();  // single whitespace before the raster
  const std::size_t channels = img.magic == "P6" ? 3 : 1;
  img.data.resize(img.width * img.height * channels);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!in) throw FormatError("pnm: truncated raster in " + path.string());
  return img;
}

}  // namespace sscae
