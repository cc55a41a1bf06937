#include "nmfsep/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace nmfsep {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char *p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t read_u16(const unsigned char *p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

void put_u16(std::string &out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

[[noreturn]] void malformed(const std::filesystem::path &path, const std::string &what) {
  throw InvalidArgument("WAV file " + path.string() + ": " + what);
}

} // namespace

WavData wav_read(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InvalidArgument("cannot open WAV file " + path.string());
  }
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto *data = reinterpret_cast<const unsigned char *>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
    malformed(path, "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char *payload = nullptr;
  std::size_t payload_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char *chunk = data + pos;
    const std::uint32_t chunk_size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (chunk_size > size - body) {
      malformed(path, "chunk extends past the end of the file");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16) {
        malformed(path, "fmt chunk too short");
      }
      format = read_u16(data + body);
      channels = read_u16(data + body + 2);
      rate = read_u32(data + body + 4);
      bits = read_u16(data + body + 14);
      if (format == kFormatExtensible) {
        if (chunk_size < 40) {
          malformed(path, "extensible fmt chunk too short");
        }
        // The sub-format GUID starts with the plain format tag.
        format = read_u16(data + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      payload = data + body;
      payload_size = chunk_size;
    }
    // Chunks are padded to an even size.
    pos = body + chunk_size + (chunk_size & 1U);
  }
  if (!have_fmt) {
    malformed(path, "missing fmt chunk");
  }
  if (payload == nullptr) {
    malformed(path, "missing data chunk");
  }
  if (channels != 1) {
    malformed(path, "has " + std::to_string(channels) +
                        " channels; only mono files are supported (downmix first)");
  }
  if (rate == 0) {
    malformed(path, "sample rate is zero");
  }

  WavData out;
  out.sample_rate = rate;
  if (format == kFormatPcm && bits == 16) {
    out.format = WavFormat::pcm16;
    const std::size_t n = payload_size / 2;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto raw = static_cast<std::int16_t>(read_u16(payload + 2 * i));
      out.samples[i] = raw / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    out.format = WavFormat::float32;
    const std::size_t n = payload_size / 4;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      out.samples[i] = std::bit_cast<float>(read_u32(payload + 4 * i));
    }
  } else {
    malformed(path, "unsupported codec (format tag " + std::to_string(format) + ", " +
                        std::to_string(bits) +
                        " bits); only 16-bit PCM and 32-bit float are supported");
  }
  return out;
}

std::size_t wav_write(const std::filesystem::path &path, const Signal &samples,
                      double sample_rate, WavFormat format) {
  require(sample_rate > 0.0 && sample_rate < 4.3e9 && sample_rate == std::floor(sample_rate),
          "WAV sample rate must be a positive integer");
  const auto rate = static_cast<std::uint32_t>(sample_rate);
  const std::uint16_t bytes_per_sample = format == WavFormat::pcm16 ? 2 : 4;
  const std::uint64_t payload = static_cast<std::uint64_t>(samples.size()) * bytes_per_sample;
  require(payload + 36 <= 0xFFFFFFFFULL, "signal too long for a RIFF file");

  std::string out;
  out.reserve(static_cast<std::size_t>(payload) + 44);
  out += "RIFF";
  put_u32(out, static_cast<std::uint32_t>(36 + payload));
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, format == WavFormat::pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * bytes_per_sample);
  put_u16(out, bytes_per_sample);
  put_u16(out, static_cast<std::uint16_t>(8 * bytes_per_sample));
  out += "data";
  put_u32(out, static_cast<std::uint32_t>(payload));

  std::size_t clipped = 0;
  for (double x : samples) {
    require(std::isfinite(x), "cannot write a non-finite sample to WAV");
    if (format == WavFormat::pcm16) {
      double scaled = std::round(x * 32768.0);
      if (scaled > 32767.0 || scaled < -32768.0) {
        ++clipped;
        scaled = std::clamp(scaled, -32768.0, 32767.0);
      }
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw InvalidArgument("cannot create WAV file " + path.string());
  }
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) {
    throw Error("failed writing WAV file " + path.string());
  }
  return clipped;
}

} // namespace nmfsep
