#pragma once

// Mono RIFF/WAVE reader and writer, PCM16 and IEEE float32 only.
// No resampling anywhere: rate mismatches are reported, never fixed silently.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "unetgan/common.hpp"

namespace unetgan {

struct Waveform {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  std::uint32_t sample_rate = 16000;

  void validate() const {
    if (samples.empty()) throw DataError("waveform: empty");
    if (sample_rate == 0) throw DataError("waveform: sample rate must be positive");
    for (double s : samples)
      if (!(s >= -1.0 && s <= 1.0))
        throw DataError("waveform: sample out of [-1,1] range: " + std::to_string(s));
  }
};

inline void require_rate(const Waveform& w, std::uint32_t hz, const std::string& what) {
  if (w.sample_rate != hz)
    throw DataError(what + ": sample rate " + std::to_string(w.sample_rate) + " Hz, expected " +
                    std::to_string(hz) + " Hz (no silent resampling)");
}

enum class WavEncoding { pcm16, float32 };

namespace detail {

template <class U>
U read_le(std::istream& is, const std::string& path) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (std::size_t(is.gcount()) != sizeof(U)) throw FormatError("wav: truncated file: " + path);
  return v;
}

}  // namespace detail

inline Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("wav: cannot open: " + path);
  char tag[4];
  auto read_tag = [&](const char* what) {
    is.read(tag, 4);
    if (is.gcount() != 4) throw FormatError(std::string("wav: truncated ") + what + ": " + path);
  };
  read_tag("RIFF header");
  if (std::memcmp(tag, "RIFF", 4) != 0) throw FormatError("wav: not a RIFF file: " + path);
  detail::read_le<std::uint32_t>(is, path);  // riff size, unchecked
  read_tag("WAVE tag");
  if (std::memcmp(tag, "WAVE", 4) != 0) throw FormatError("wav: not a WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<char> payload;
  while (is.peek() != EOF) {
    read_tag("chunk id");
    std::uint32_t size = detail::read_le<std::uint32_t>(is, path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("wav: malformed fmt chunk: " + path);
      format = detail::read_le<std::uint16_t>(is, path);
      channels = detail::read_le<std::uint16_t>(is, path);
      rate = detail::read_le<std::uint32_t>(is, path);
      detail::read_le<std::uint32_t>(is, path);  // byte rate
      detail::read_le<std::uint16_t>(is, path);  // block align
      bits = detail::read_le<std::uint16_t>(is, path);
      is.seekg(size - 16 + (size & 1), std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      payload.resize(size);
      is.read(payload.data(), std::streamsize(size));
      if (std::size_t(is.gcount()) != size)
        throw FormatError("wav: truncated data chunk: " + path);
      break;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
      if (!is) throw FormatError("wav: truncated chunk list: " + path);
    }
  }
  if (!have_fmt || payload.empty()) throw FormatError("wav: missing fmt or data chunk: " + path);
  if (channels != 1)
    throw FormatError("wav: " + path + " has " + std::to_string(channels) +
                      " channels, only mono is supported");

  Waveform w;
  w.sample_rate = rate;
  if (format == 1 && bits == 16) {
    std::size_t n = payload.size() / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::int16_t s;
      std::memcpy(&s, payload.data() + 2 * i, 2);
      w.samples[i] = double(s) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    std::size_t n = payload.size() / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      float s;
      std::memcpy(&s, payload.data() + 4 * i, 4);
      w.samples[i] = double(s);
    }
  } else {
    throw FormatError("wav: unsupported encoding in " + path + " (format tag " +
                      std::to_string(format) + ", " + std::to_string(bits) +
                      " bits); need PCM16 or IEEE float32 mono");
  }
  if (w.samples.empty()) throw FormatError("wav: empty data chunk: " + path);
  return w;
}

inline void write_wav(const std::string& path, const Waveform& w,
                      WavEncoding enc = WavEncoding::float32) {
  w.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("wav: cannot open for writing: " + path);
  const std::uint16_t channels = 1;
  const std::uint16_t bits = enc == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t format = enc == WavEncoding::pcm16 ? 1 : 3;
  const std::uint32_t bytes_per_sample = bits / 8;
  const std::uint32_t data_size = std::uint32_t(w.samples.size()) * bytes_per_sample;

  auto put16 = [&](std::uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
  auto put32 = [&](std::uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };

  os.write("RIFF", 4);
  put32(36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put32(16);
  put16(format);
  put16(channels);
  put32(w.sample_rate);
  put32(w.sample_rate * bytes_per_sample);
  put16(std::uint16_t(bytes_per_sample));
  put16(bits);
  os.write("data", 4);
  put32(data_size);
  if (enc == WavEncoding::pcm16) {
    for (double s : w.samples) {
      double q = std::round(s * 32768.0);
      std::int16_t v = std::int16_t(std::clamp(q, -32768.0, 32767.0));
      os.write(reinterpret_cast<char*>(&v), 2);
    }
  } else {
    for (double s : w.samples) {
      float v = float(s);
      os.write(reinterpret_cast<char*>(&v), 4);
    }
  }
  if (!os) throw FormatError("wav: write failed: " + path);
}

}  // namespace unetgan
