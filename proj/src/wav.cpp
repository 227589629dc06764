// Copyright 2026 The sepforge Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "sepforge/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "sepforge/util.hpp"

namespace sepforge::wav {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

AudioBuffer decode(const std::vector<std::uint8_t>& bytes,
                   const std::string& source_id) {
  const auto fail = [&](const std::string& what) -> AudioError {
    return AudioError("wav " + (source_id.empty() ? "<memory>" : source_id) +
                      ": " + what);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > avail) throw fail("truncated fmt chunk");
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      bits = le16(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40) throw fail("truncated extensible fmt chunk");
        format = le16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      // Streamed writers sometimes leave the size unset; clamp to the file.
      data_size = std::min<std::size_t>(size, avail);
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw fail("missing fmt chunk");
  if (data == nullptr) throw fail("missing data chunk");
  if (channels == 0) throw fail("zero channels");
  if (rate == 0) throw fail("zero sample rate");

  int width = 0;
  if (format == kFormatPcm && bits == 16) {
    width = 2;
  } else if (format == kFormatPcm && bits == 24) {
    width = 3;
  } else if (format == kFormatFloat && bits == 32) {
    width = 4;
  } else {
    throw fail("unsupported encoding (format " + std::to_string(format) +
               ", " + std::to_string(bits) + " bits)");
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(width) * channels;
  const std::size_t n = (data_size / frame_bytes) * channels;
  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  out.channels = channels;
  out.source_id = source_id;
  out.samples.resize(n);
  const std::uint8_t* p = data;
  for (std::size_t i = 0; i < n; ++i, p += width) {
    switch (width) {
      case 2:
        out.samples[i] = static_cast<std::int16_t>(le16(p)) / 32768.0;
        break;
      case 3: {
        std::int32_t v = static_cast<std::int32_t>(
            static_cast<std::uint32_t>(p[0]) << 8 |
            static_cast<std::uint32_t>(p[1]) << 16 |
            static_cast<std::uint32_t>(p[2]) << 24);
        out.samples[i] = (v >> 8) / 8388608.0;
        break;
      }
      default:
        out.samples[i] = std::bit_cast<float>(le32(p));
        break;
    }
  }
  return out;
}

AudioBuffer read(const std::filesystem::path& path,
                 const std::string& source_id) {
  return decode(util::read_bytes(path),
                source_id.empty() ? path.string() : source_id);
}

std::vector<std::uint8_t> encode(const AudioBuffer& buffer,
                                 SampleFormat format) {
  validate(buffer);
  const int width = format == SampleFormat::kPcm16   ? 2
                    : format == SampleFormat::kPcm24 ? 3
                                                     : 4;
  const std::uint64_t data_size =
      static_cast<std::uint64_t>(buffer.samples.size()) * width;
  if (data_size > 0xFFFFFFFFull - 64) {
    throw AudioError("audio too large for a RIFF container");
  }
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put32(out, static_cast<std::uint32_t>(36 + data_size + (data_size & 1u)));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, format == SampleFormat::kFloat32 ? kFormatFloat : kFormatPcm);
  put16(out, static_cast<std::uint16_t>(buffer.channels));
  put32(out, static_cast<std::uint32_t>(buffer.sample_rate));
  put32(out, static_cast<std::uint32_t>(buffer.sample_rate * buffer.channels *
                                        width));
  put16(out, static_cast<std::uint16_t>(buffer.channels * width));
  put16(out, static_cast<std::uint16_t>(width * 8));
  put_tag(out, "data");
  put32(out, static_cast<std::uint32_t>(data_size));

  for (double s : buffer.samples) {
    switch (format) {
      case SampleFormat::kFloat32:
        put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(s)));
        break;
      case SampleFormat::kPcm16: {
        const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
        break;
      }
      case SampleFormat::kPcm24: {
        const double q =
            std::clamp(std::round(s * 8388608.0), -8388608.0, 8388607.0);
        const auto v = static_cast<std::uint32_t>(static_cast<std::int32_t>(q));
        out.push_back(static_cast<std::uint8_t>(v & 0xFF));
        out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
        out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
        break;
      }
    }
  }
  if (data_size & 1u) out.push_back(0);
  return out;
}

void write(const std::filesystem::path& path, const AudioBuffer& buffer,
           SampleFormat format) {
  util::write_atomic(path, encode(buffer, format));
}

}  // namespace sepforge::wav
