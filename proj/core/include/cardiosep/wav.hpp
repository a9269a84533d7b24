#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cardiosep/siggen.hpp"

namespace cardiosep::io {

enum class WavEncoding { pcm16, float32 };

WavEncoding wav_encoding_from_string(const std::string& name);

/// Reads a mono RIFF/WAVE file holding PCM16 or IEEE float32 samples.
siggen::SourceSignal read_wav(const std::filesystem::path& path);
siggen::SourceSignal parse_wav(std::span<const std::uint8_t> bytes);

/// Serializes mono samples in [-1, 1]. Float32 stores each sample as the
/// nearest float; PCM16 rounds x * 32768 and clamps to the int16 range.
std::vector<std::uint8_t> encode_wav(std::span<const double> samples, double sample_rate, WavEncoding encoding);
void write_wav(const std::filesystem::path& path, std::span<const double> samples, double sample_rate,
               WavEncoding encoding = WavEncoding::float32);

}  // namespace cardiosep::io
