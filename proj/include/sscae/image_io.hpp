#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sscae {

/// Min-max scales values to 0..255; a constant input maps to 128 everywhere.
std::vector<std::uint8_t> minmax_to_bytes(std::span<const double> values);

/// Binary PGM (P5), 8-bit.
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> gray);

/// Binary PPM (P6), 8-bit, interleaved RGB.
void write_ppm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> rgb);

/// Writes a [C, H, W] planar image: PGM for C == 1, PPM for C == 3.
/// The caller picks the extension; values are min-max scaled jointly.
void write_planar_image(const std::filesystem::path& path, std::size_t channels, std::size_t height,
                        std::size_t width, std::span<const double> planar);

struct PnmImage {
  std::string magic;  // "P5" or "P6"
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> data;
};

PnmImage read_pnm(const std::filesystem::path& path);

}  // namespace sscae
