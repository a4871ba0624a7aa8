#pragma once

#include <filesystem>

#include "fbsp/signal.hpp"

namespace fbsp {

enum class WavFormat { pcm16, float32 };

/// Reads a little-endian RIFF/WAVE file (PCM 16-bit or IEEE float 32-bit).
/// Multi-channel input is downmixed by averaging channels.
Waveform read_wav(const std::filesystem::path& path);

/// Writes a mono file. PCM16 output clips to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& signal,
               WavFormat format = WavFormat::float32);

}  // namespace fbsp
