#pragma once

#include "nmfsep/common.hpp"

#include <filesystem>

namespace nmfsep {

enum class WavFormat { pcm16, float32 };

struct WavData {
  Signal samples;
  double sample_rate = 0.0;
  WavFormat format = WavFormat::float32;
};

/// Reads a mono RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float
/// samples (plain or WAVE_FORMAT_EXTENSIBLE). PCM is scaled by 1/32768.
/// Anything else is rejected with an InvalidArgument naming the problem.
WavData wav_read(const std::filesystem::path &path);

/// Writes a mono file and returns the number of samples clipped to the
/// representable range (16-bit only; callers decide whether to warn).
std::size_t wav_write(const std::filesystem::path &path, const Signal &samples,
                      double sample_rate, WavFormat format = WavFormat::float32);

} // namespace nmfsep
