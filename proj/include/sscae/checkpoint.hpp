#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "sscae/model.hpp"

namespace sscae {

// Layout: 8-byte magic "SSCAE001", u32 little-endian header length, a text
// header of key=value lines (model config, then one `tensor=` manifest line
// per array), then the raw little-endian arrays in manifest order.

inline constexpr char kCheckpointMagic[9] = "SSCAE001";

struct Checkpoint {
  ModelConfig config;
  std::variant<ModelState<float>, ModelState<double>> state;
};

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const ModelConfig& config, const ModelState<T>& state);

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelState<T>& state);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Config serialized as the checkpoint's key=value lines.
std::string config_to_text(const ModelConfig& config);

}  // namespace sscae
