#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sscae/tensor.hpp"

namespace sscae {

enum class DataSource { idx, cifar, synthetic };

std::string to_string(DataSource s);

/// Images stored as raw bytes; value v represents the pixel v / 255 in [0, 1].
/// No whitening or mean subtraction is ever applied.
struct Dataset {
  Shape shape;  // [N, C, H, W]
  std::vector<std::uint8_t> pixels;
  DataSource source = DataSource::synthetic;

  std::size_t size() const noexcept { return shape.n; }
  std::size_t image_bytes() const noexcept { return shape.c * shape.h * shape.w; }

  /// Selected images as a [indices.size(), C, H, W] tensor scaled to [0, 1].
  template <typename T>
  Tensor<T> batch(std::span<const std::size_t> indices) const;

  /// Every image as one tensor.
  template <typename T>
  Tensor<T> images() const;

  /// First n images (all of them when n >= size()).
  Dataset head(std::size_t n) const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

/// MNIST-style IDX images (unsigned byte, rank 3). Gzip input (1f 8b) is
/// decompressed transparently.
Dataset load_idx(const std::filesystem::path& path);
Dataset parse_idx(std::span<const std::uint8_t> bytes);

/// Inverse of parse_idx for single-channel datasets.
std::vector<std::uint8_t> serialize_idx(const Dataset& data);
void save_idx(const Dataset& data, const std::filesystem::path& path);

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// CIFAR-10 binary batch: records of 1 label byte + 3072 channel-major pixels.
Dataset load_cifar10_bin(const std::filesystem::path& path);
Dataset parse_cifar10(std::span<const std::uint8_t> bytes);

/// n binary images of bars, corners and crosses with 1-2 pixel strokes.
Dataset synth_shapes(std::size_t n, std::size_t height, std::size_t width, std::uint64_t seed);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace sscae
