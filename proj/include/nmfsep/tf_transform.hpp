#pragma once

#include "nmfsep/common.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace nmfsep {

/// STFT parameterization: analysis/synthesis window, hop and sample rate.
///
/// The window is rescaled at construction so that the hop-shifted squared
/// window sums to exactly one. With that normalization the weighted
/// overlap-add inverse is a plain overlap-add of windowed inverse DFTs.
class StftPlan {
public:
  /// Normalized periodic Hann window. hop = 0 selects window_length / 4.
  static StftPlan hann(int window_length, double sample_rate, int hop = 0);

  /// Arbitrary nonnegative window; rejected unless its squared shifts
  /// overlap-add to a constant.
  StftPlan(std::vector<double> window, int hop, double sample_rate);

  int window_length() const { return static_cast<int>(window_.size()); }
  int hop() const { return hop_; }
  double sample_rate() const { return sample_rate_; }
  const std::vector<double> &window() const { return window_; }

  /// One-sided bin count, window_length / 2 + 1.
  int num_bins() const { return window_length() / 2 + 1; }
  /// Frames produced for a signal of the given length.
  int num_frames(std::size_t signal_length) const;
  double bin_width_hz() const { return sample_rate_ / window_length(); }
  /// Frames that overlap a given frame on each side, window_length / hop - 1.
  int overlap_frames() const { return window_length() / hop_ - 1; }

  bool operator==(const StftPlan &other) const = default;

private:
  std::vector<double> window_;
  int hop_ = 0;
  double sample_rate_ = 0.0;
};

/// One-sided complex STFT of a real signal, tied to its plan.
class Spectrogram {
public:
  Spectrogram(ComplexMatrix data, StftPlan plan, std::size_t signal_length);

  const ComplexMatrix &data() const { return data_; }
  const StftPlan &plan() const { return plan_; }
  std::size_t signal_length() const { return signal_length_; }
  int bins() const { return static_cast<int>(data_.rows()); }
  int frames() const { return static_cast<int>(data_.cols()); }

  /// A spectrogram with the same plan and length but different values.
  Spectrogram with_data(ComplexMatrix data) const;

  RealMatrix magnitude() const { return data_.cwiseAbs(); }
  RealMatrix power() const { return data_.cwiseAbs2(); }

private:
  ComplexMatrix data_;
  StftPlan plan_;
  std::size_t signal_length_;
};

Spectrogram stft(std::span<const double> signal, const StftPlan &plan,
                 ExecPolicy policy = ExecPolicy::parallel);

Signal istft(const Spectrogram &spec, ExecPolicy policy = ExecPolicy::parallel);

/// F(X) = STFT(ISTFT(X)), the orthogonal projection onto consistent
/// spectrograms.
Spectrogram consistency_project(const Spectrogram &spec,
                                ExecPolicy policy = ExecPolicy::parallel);

/// Per-bin weights that make one-sided sums equal full-spectrum sums:
/// 1 for DC and Nyquist, 2 elsewhere.
RealVector one_sided_weights(int bins);

/// Full-spectrum squared norm of a one-sided matrix.
double weighted_squared_norm(const ComplexMatrix &m);
double weighted_squared_norm(const RealMatrix &m);

/// ||X - F(X)||^2 over the full spectrum.
double inconsistency(const Spectrogram &spec,
                     ExecPolicy policy = ExecPolicy::parallel);

/// Truncation of the local consistency kernel, as full widths (odd).
struct KernelTruncation {
  int bins = 3;
  int frames = 7;

  /// 3 bins by 2 * (window_length / hop - 1) + 1 frames.
  static KernelTruncation default_for(const StftPlan &plan);
  /// Widths covering the whole kernel support; application is then exact.
  static KernelTruncation full_support(const StftPlan &plan);
};

/// Local time-frequency kernel approximating F.
///
/// coeffs(q + bin_radius, d + frame_radius) holds
///   (1/N) sum_n w(n) w(n + d*hop) exp(-2i pi q n / N),
/// the weight with which bin f - q of frame t - d contributes to bin f of
/// frame t (before the modulation exp(2i pi (f - q) d hop / N)).
struct LerouxKernel {
  ComplexMatrix coeffs;
  int bin_radius = 0;
  int frame_radius = 0;
  StftPlan plan;
};

LerouxKernel leroux_kernel(const StftPlan &plan, KernelTruncation truncation);

/// Applies the kernel to X. Frames whose window reaches into the zero
/// padding use the kernel recomputed over the in-signal part of the window,
/// so full-support application reproduces consistency_project exactly.
Spectrogram apply_leroux_kernel(const LerouxKernel &kernel,
                                const Spectrogram &spec,
                                ExecPolicy policy = ExecPolicy::parallel);

} // namespace nmfsep
