#include "fbsp/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "fbsp/error.hpp"

namespace fbsp {

namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T load(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::array<std::uint8_t, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  out.insert(out.end(), bytes.begin(), bytes.end());
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ValidationError(path.string() + ": not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const auto size = load<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw ValidationError(path.string() + ": short fmt chunk");
      format = load<std::uint16_t>(bytes.data() + body);
      channels = load<std::uint16_t>(bytes.data() + body + 2);
      rate = load<std::uint32_t>(bytes.data() + body + 4);
      bits = load<std::uint16_t>(bytes.data() + body + 14);
      if (format == kFormatExtensible && avail >= 26) {
        format = load<std::uint16_t>(bytes.data() + body + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1u);
  }

  if (channels == 0 || rate == 0) {
    throw ValidationError(path.string() + ": missing fmt chunk");
  }
  if (data == nullptr) throw ValidationError(path.string() + ": missing data chunk");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw ValidationError(path.string() +
                          ": only PCM 16-bit and float 32-bit are supported");
  }

  const std::size_t width = bits / 8;
  const std::size_t frames = data_size / (width * channels);
  std::vector<double> samples(frames, 0.0);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + (i * channels + c) * width;
      acc += pcm16 ? load<std::int16_t>(p) / 32768.0
                   : static_cast<double>(load<float>(p));
    }
    samples[i] = acc / channels;
  }
  return Waveform(std::move(samples), static_cast<int>(rate));
}

void write_wav(const std::filesystem::path& path, const Waveform& signal,
               WavFormat format) {
  const bool pcm16 = format == WavFormat::pcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(signal.size() * (bits / 8));
  const auto rate = static_cast<std::uint32_t>(signal.sample_rate());

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put<std::uint32_t>(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, pcm16 ? kFormatPcm : kFormatFloat);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, rate);
  put<std::uint32_t>(out, rate * (bits / 8));
  put<std::uint16_t>(out, bits / 8);
  put<std::uint16_t>(out, bits);
  put_tag(out, "data");
  put<std::uint32_t>(out, data_size);
  for (double s : signal.samples()) {
    if (pcm16) {
      const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
      put<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32768.0)));
    } else {
      put<float>(out, static_cast<float>(s));
    }
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw ValidationError("cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
}

}  // namespace fbsp
