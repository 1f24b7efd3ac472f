// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mtlasd/error.hpp"

namespace mtlasd {
namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

double decode_sample(const unsigned char* p, int format, int bits) {
  if (format == 3) {
    if (bits == 32) {
      float f;
      std::memcpy(&f, p, 4);
      return f;
    }
    double d;
    std::memcpy(&d, p, 8);
    return d;
  }
  switch (bits) {
    case 8: return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16: return static_cast<std::int16_t>(le16(p)) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v |= ~0xffffff;
      return v / 8388608.0;
    }
    default: return static_cast<std::int32_t>(le32(p)) / 2147483648.0;
  }
}

}  // namespace

const char* condition_name(Condition c) {
  switch (c) {
    case Condition::kNormal: return "normal";
    case Condition::kAnomalous: return "anomalous";
    case Condition::kUnknown: return "unknown";
  }
  return "unknown";
}

Condition parse_condition(const std::string& s) {
  if (s == "normal") return Condition::kNormal;
  if (s == "anomalous" || s == "abnormal" || s == "anomaly") return Condition::kAnomalous;
  if (s == "unknown") return Condition::kUnknown;
  fail(ErrorCode::kFormat, "unknown condition '" + s + "'");
}

std::size_t expected_sample_count(int sample_rate, double duration_s) {
  return static_cast<std::size_t>(std::llround(sample_rate * duration_s));
}

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFound, "cannot open wav file " + path);
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorCode::kFormat, path + ": not a RIFF/WAVE file");
  }

  int format = 0, channels = 0, rate = 0, bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t size = le32(&buf[pos + 4]);
    const unsigned char* body = &buf[pos + 8];
    const std::size_t avail = std::min<std::size_t>(size, buf.size() - pos - 8);
    if (std::memcmp(&buf[pos], "fmt ", 4) == 0 && avail >= 16) {
      format = le16(body);
      channels = le16(body + 2);
      rate = static_cast<int>(le32(body + 4));
      bits = le16(body + 14);
      if (format == 0xFFFE && avail >= 26) format = le16(body + 24);  // extensible subformat
    } else if (std::memcmp(&buf[pos], "data", 4) == 0) {
      data = body;
      data_size = avail;
    }
    pos += 8 + size + (size & 1);
  }
  if (format == 0 || data == nullptr) fail(ErrorCode::kFormat, path + ": missing fmt or data chunk");
  const bool int_ok = format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == 3 && (bits == 32 || bits == 64);
  if (!int_ok && !float_ok) {
    fail(ErrorCode::kFormat, path + ": unsupported wav encoding (format " + std::to_string(format) +
                                 ", " + std::to_string(bits) + " bits)");
  }
  if (channels < 1) fail(ErrorCode::kFormat, path + ": zero channels");

  const std::size_t bytes = static_cast<std::size_t>(bits / 8);
  const std::size_t frame_bytes = bytes * static_cast<std::size_t>(channels);
  const std::size_t frames = data_size / frame_bytes;
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) acc += decode_sample(data + f * frame_bytes + c * bytes, format, bits);
    clip.samples[f] = static_cast<float>(acc / channels);
  }
  return clip;
}

void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate) {
  std::vector<unsigned char> out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate * 2));
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (float s : samples) {
    const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::clamp(std::lround(c * 32767.0), -32768L, 32767L));
    put16(out, static_cast<std::uint16_t>(q));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::kIo, "cannot write wav file " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorCode::kIo, "short write to " + path);
}

}  // namespace mtlasd
