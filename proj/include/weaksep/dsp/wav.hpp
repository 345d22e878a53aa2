#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "weaksep/dsp/waveform.hpp"
#include "weaksep/errors.hpp"

namespace weaksep::dsp {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

inline std::uint16_t read_u16(const unsigned char* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

template <class T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

}  // namespace detail

inline std::int16_t to_pcm16(double x) {
  const double scaled = std::round(x * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

inline double from_pcm16(std::int16_t v) { return static_cast<double>(v) / 32768.0; }

/// Reads a mono 16-bit PCM WAV file. Samples are scaled to [-1, 1).
inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file: " + path.string());
  }

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t chunk_size = detail::read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) {
      // Tolerate a truncated trailing data chunk.
      if (std::memcmp(chunk, "data", 4) != 0) break;
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw DataError("malformed fmt chunk in " + path.string());
      std::uint16_t format = detail::read_u16(bytes.data() + body);
      channels = detail::read_u16(bytes.data() + body + 2);
      rate = detail::read_u32(bytes.data() + body + 4);
      bits = detail::read_u16(bytes.data() + body + 14);
      if (format == 0xFFFE && chunk_size >= 26) {
        // WAVE_FORMAT_EXTENSIBLE: the sub-format GUID starts with the format tag.
        format = detail::read_u16(bytes.data() + body + 24);
      }
      if (format != 1) throw DataError("unsupported WAV encoding (not PCM) in " + path.string());
      if (channels != 1) {
        throw DataError("expected mono WAV, got " + std::to_string(channels) + " channels in " +
                        path.string());
      }
      if (bits != 16) throw DataError("expected 16-bit PCM in " + path.string());
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw DataError("data chunk before fmt chunk in " + path.string());
      const std::size_t available = std::min<std::size_t>(chunk_size, bytes.size() - body);
      const std::size_t count = available / 2;
      std::vector<double> samples(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::int16_t v;
        std::memcpy(&v, bytes.data() + body + 2 * i, 2);
        samples[i] = from_pcm16(v);
      }
      return Waveform(std::move(samples), static_cast<double>(rate));
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  throw DataError("no data chunk in " + path.string());
}

/// Writes a mono 16-bit PCM WAV file; samples are clipped to full scale.
inline void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (!(w.sample_rate > 0.0)) throw std::invalid_argument("write_wav: sample rate must be positive");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write WAV file " + path.string());
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(w.size() * 2);
  out.write("RIFF", 4);
  detail::put<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  detail::put<std::uint32_t>(out, 16);
  detail::put<std::uint16_t>(out, 1);
  detail::put<std::uint16_t>(out, 1);
  detail::put<std::uint32_t>(out, rate);
  detail::put<std::uint32_t>(out, rate * 2);
  detail::put<std::uint16_t>(out, 2);
  detail::put<std::uint16_t>(out, 16);
  out.write("data", 4);
  detail::put<std::uint32_t>(out, data_bytes);
  std::vector<std::int16_t> pcm(w.size());
  std::transform(w.samples.begin(), w.samples.end(), pcm.begin(), to_pcm16);
  out.write(reinterpret_cast<const char*>(pcm.data()), static_cast<std::streamsize>(pcm.size() * 2));
  if (!out) throw DataError("failed writing WAV file " + path.string());
}

/// Rounds every sample onto the 16-bit PCM grid.
inline Waveform quantize_pcm16(const Waveform& w) {
  Waveform out = w;
  for (double& x : out.samples) x = from_pcm16(to_pcm16(x));
  return out;
}

}  // namespace weaksep::dsp
