#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cardiosep/config.hpp"
#include "cardiosep/dsp.hpp"
#include "cardiosep/vae.hpp"

namespace cardiosep::io {

inline constexpr int kCheckpointVersion = 1;

/// Layout: a text header (magic line, `version N`, key/value lines, one
/// `block <name> <rows> <cols>` line per parameter block, then `data`),
/// followed by every block's row-major doubles in little-endian order.
struct Checkpoint {
    vae::VaeModel model;
    dsp::FeatureStats stats;
    RunConfig config;
    std::size_t epoch = 0;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Short content hash (FNV-1a, hex) used as a provenance id.
std::string content_id(std::span<const std::uint8_t> bytes);

}  // namespace cardiosep::io
