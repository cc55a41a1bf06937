#include "nmfsep/tf_transform.hpp"

#include "fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nmfsep {
namespace {

constexpr double kColaTolerance = 1e-12;

// Squared-window overlap-add over one hop period.
std::vector<double> squared_shift_sum(const std::vector<double> &w, int hop) {
  std::vector<double> acc(static_cast<std::size_t>(hop), 0.0);
  for (std::size_t n = 0; n < w.size(); ++n) {
    acc[n % static_cast<std::size_t>(hop)] += w[n] * w[n];
  }
  return acc;
}

} // namespace

StftPlan StftPlan::hann(int window_length, double sample_rate, int hop) {
  require(window_length > 0 && window_length % 2 == 0,
          "window_length must be a positive even integer");
  if (hop == 0) {
    hop = window_length / 4;
  }
  std::vector<double> w(static_cast<std::size_t>(window_length));
  for (int n = 0; n < window_length; ++n) {
    w[static_cast<std::size_t>(n)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / window_length);
  }
  return StftPlan(std::move(w), hop, sample_rate);
}

StftPlan::StftPlan(std::vector<double> window, int hop, double sample_rate)
    : window_(std::move(window)), hop_(hop), sample_rate_(sample_rate) {
  const int n = window_length();
  require(n > 0 && n % 2 == 0, "window_length must be a positive even integer");
  require(hop > 0 && n % hop == 0, "hop must be positive and divide window_length");
  require(sample_rate > 0.0, "sample_rate must be positive");
  require(std::all_of(window_.begin(), window_.end(),
                      [](double v) { return v >= 0.0 && std::isfinite(v); }),
          "window entries must be finite and nonnegative");

  const auto acc = squared_shift_sum(window_, hop);
  const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
  require(*lo > 0.0 && (*hi - *lo) <= kColaTolerance * *hi,
          "window/hop pair violates the squared-window COLA condition");
  double mean = 0.0;
  for (double v : acc) {
    mean += v;
  }
  mean /= static_cast<double>(acc.size());
  const double scale = 1.0 / std::sqrt(mean);
  for (double &v : window_) {
    v *= scale;
  }
}

int StftPlan::num_frames(std::size_t signal_length) const {
  // Zero padding of window_length on both ends.
  const auto padded = signal_length + 2 * window_.size();
  return static_cast<int>((padded - window_.size()) / static_cast<std::size_t>(hop_)) + 1;
}

Spectrogram::Spectrogram(ComplexMatrix data, StftPlan plan, std::size_t signal_length)
    : data_(std::move(data)), plan_(std::move(plan)), signal_length_(signal_length) {
  require(data_.rows() == plan_.num_bins(),
          "spectrogram bin count does not match its plan");
  require(data_.cols() == plan_.num_frames(signal_length_),
          "spectrogram frame count does not match its plan and signal length");
}

Spectrogram Spectrogram::with_data(ComplexMatrix data) const {
  return Spectrogram(std::move(data), plan_, signal_length_);
}

Spectrogram stft(std::span<const double> signal, const StftPlan &plan, ExecPolicy policy) {
  require(!signal.empty(), "stft: signal must not be empty");
  const int n = plan.window_length();
  const int hop = plan.hop();
  const int bins = plan.num_bins();
  const int frames = plan.num_frames(signal.size());
  const auto len = static_cast<long>(signal.size());
  const detail::RealFft fft(n);
  const auto &w = plan.window();

  ComplexMatrix out(bins, frames);
  auto frame_kernel = [&](int t, std::vector<double> &buf) {
    // Frame t starts at padded index t*hop, i.e. signal index t*hop - n.
    const long start = static_cast<long>(t) * hop - n;
    for (int i = 0; i < n; ++i) {
      const long s = start + i;
      buf[static_cast<std::size_t>(i)] =
          (s >= 0 && s < len) ? w[static_cast<std::size_t>(i)] * signal[static_cast<std::size_t>(s)]
                              : 0.0;
    }
    fft.forward(buf.data(), out.col(t).data());
  };

  if (policy == ExecPolicy::parallel) {
#pragma omp parallel
    {
      std::vector<double> buf(static_cast<std::size_t>(n));
#pragma omp for schedule(static)
      for (int t = 0; t < frames; ++t) {
        frame_kernel(t, buf);
      }
    }
  } else {
    std::vector<double> buf(static_cast<std::size_t>(n));
    for (int t = 0; t < frames; ++t) {
      frame_kernel(t, buf);
    }
  }
  return Spectrogram(std::move(out), plan, signal.size());
}

Signal istft(const Spectrogram &spec, ExecPolicy policy) {
  const auto &plan = spec.plan();
  const int n = plan.window_length();
  const int hop = plan.hop();
  const int frames = spec.frames();
  const int bins = spec.bins();
  const detail::RealFft fft(n);
  const auto &w = plan.window();
  const double inv_n = 1.0 / n;

  // Windowed inverse frames first (independent), then a fixed-order
  // overlap-add so serial and parallel paths agree bit for bit.
  RealMatrix segments(n, frames);
  auto frame_kernel = [&](int t, std::vector<Complex> &scratch) {
    double *seg = segments.col(t).data();
    fft.inverse(spec.data().col(t).data(), scratch.data(), seg);
    for (int i = 0; i < n; ++i) {
      seg[i] *= inv_n * w[static_cast<std::size_t>(i)];
    }
  };
  if (policy == ExecPolicy::parallel) {
#pragma omp parallel
    {
      std::vector<Complex> scratch(static_cast<std::size_t>(bins));
#pragma omp for schedule(static)
      for (int t = 0; t < frames; ++t) {
        frame_kernel(t, scratch);
      }
    }
  } else {
    std::vector<Complex> scratch(static_cast<std::size_t>(bins));
    for (int t = 0; t < frames; ++t) {
      frame_kernel(t, scratch);
    }
  }

  const auto len = static_cast<long>(spec.signal_length());
  Signal out(spec.signal_length(), 0.0);
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * hop - n;
    const long lo = std::max(0L, -start);
    const long hi = std::min(static_cast<long>(n), len - start);
    for (long i = lo; i < hi; ++i) {
      out[static_cast<std::size_t>(start + i)] += segments(i, t);
    }
  }
  return out;
}

Spectrogram consistency_project(const Spectrogram &spec, ExecPolicy policy) {
  const Signal x = istft(spec, policy);
  return stft(x, spec.plan(), policy);
}

RealVector one_sided_weights(int bins) {
  RealVector w = RealVector::Constant(bins, 2.0);
  w(0) = 1.0;
  w(bins - 1) = 1.0;
  return w;
}

double weighted_squared_norm(const ComplexMatrix &m) {
  return one_sided_weights(static_cast<int>(m.rows())).dot(m.cwiseAbs2().rowwise().sum());
}

double weighted_squared_norm(const RealMatrix &m) {
  return one_sided_weights(static_cast<int>(m.rows())).dot(m.cwiseAbs2().rowwise().sum());
}

double inconsistency(const Spectrogram &spec, ExecPolicy policy) {
  const Spectrogram projected = consistency_project(spec, policy);
  return weighted_squared_norm(ComplexMatrix(spec.data() - projected.data()));
}

KernelTruncation KernelTruncation::default_for(const StftPlan &plan) {
  return {3, 2 * plan.overlap_frames() + 1};
}

KernelTruncation KernelTruncation::full_support(const StftPlan &plan) {
  return {plan.window_length() + 1, 2 * plan.overlap_frames() + 1};
}

namespace {

// (1/N) sum_{n in [lo, hi)} w(n) w(n + d*hop) e^{-2i pi q n / N}
Complex kernel_coefficient(const std::vector<double> &w, int hop, int q, int d,
                           long lo, long hi) {
  const auto n = static_cast<long>(w.size());
  const long shift = static_cast<long>(d) * hop;
  lo = std::max({lo, 0L, -shift});
  hi = std::min({hi, n, n - shift});
  Complex acc{0.0, 0.0};
  for (long i = lo; i < hi; ++i) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>((q * i) % n) / n;
    acc += w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i + shift)] *
           Complex(std::cos(angle), std::sin(angle));
  }
  return acc / static_cast<double>(n);
}

ComplexMatrix kernel_matrix(const StftPlan &plan, int bin_radius, int frame_radius,
                            long lo, long hi) {
  const int n = plan.window_length();
  ComplexMatrix c(2 * bin_radius + 1, 2 * frame_radius + 1);
  for (int q = -bin_radius; q <= bin_radius; ++q) {
    for (int d = -frame_radius; d <= frame_radius; ++d) {
      // At full support q = -N/2 and q = N/2 alias; keep only +N/2.
      const bool alias = (2 * bin_radius == n) && q == -bin_radius;
      c(q + bin_radius, d + frame_radius) =
          alias ? Complex{} : kernel_coefficient(plan.window(), plan.hop(), q, d, lo, hi);
    }
  }
  return c;
}

} // namespace

LerouxKernel leroux_kernel(const StftPlan &plan, KernelTruncation truncation) {
  require(truncation.bins >= 3 && truncation.bins % 2 == 1 &&
              truncation.frames >= 3 && truncation.frames % 2 == 1,
          "kernel truncation widths must be odd and at least 3 (radius >= 1)");
  const int bin_radius = truncation.bins / 2;
  const int frame_radius = truncation.frames / 2;
  require(bin_radius <= plan.window_length() / 2,
          "kernel bin truncation exceeds the spectrum size");
  require(frame_radius <= plan.overlap_frames(),
          "kernel frame truncation exceeds the window overlap");
  return {kernel_matrix(plan, bin_radius, frame_radius, 0, plan.window_length()),
          bin_radius, frame_radius, plan};
}

Spectrogram apply_leroux_kernel(const LerouxKernel &kernel, const Spectrogram &spec,
                                ExecPolicy policy) {
  require(kernel.plan == spec.plan(), "kernel was built for a different STFT plan");
  const auto &plan = spec.plan();
  const int n = plan.window_length();
  const int hop = plan.hop();
  const int bins = spec.bins();
  const int frames = spec.frames();
  const int qr = kernel.bin_radius;
  const int dr = kernel.frame_radius;
  const auto len = static_cast<long>(spec.signal_length());
  const ComplexMatrix &x = spec.data();

  // Full-spectrum (Hermitian) view of a one-sided column.
  auto full = [&](int g, int t) -> Complex {
    g = ((g % n) + n) % n;
    if (g == 0 || g == n / 2) {
      return {x(g, t).real(), 0.0};
    }
    return g < n / 2 ? x(g, t) : std::conj(x(n - g, t));
  };

  // Modulation exp(2i pi g d hop / N) depends on (g*d*hop) mod N only.
  std::vector<Complex> phasor(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) {
    const double a = 2.0 * std::numbers::pi * m / n;
    phasor[static_cast<std::size_t>(m)] = {std::cos(a), std::sin(a)};
  }

  ComplexMatrix out = ComplexMatrix::Zero(bins, frames);
  auto frame_kernel = [&](int t) {
    // In-signal sample range of frame t, in window coordinates.
    const long start = static_cast<long>(t) * hop - n;
    const long lo = std::max(0L, -start);
    const long hi = std::min(static_cast<long>(n), len - start);
    const bool interior = lo == 0 && hi == n;
    const ComplexMatrix edge = interior ? ComplexMatrix() : kernel_matrix(plan, qr, dr, lo, hi);
    const ComplexMatrix &coeffs = interior ? kernel.coeffs : edge;
    for (int d = -dr; d <= dr; ++d) {
      const int src = t - d;
      if (src < 0 || src >= frames) {
        continue;
      }
      for (int f = 0; f < bins; ++f) {
        Complex acc{0.0, 0.0};
        for (int q = -qr; q <= qr; ++q) {
          const Complex c = coeffs(q + qr, d + dr);
          if (c == Complex{}) {
            continue;
          }
          const int g = f - q;
          const long m = ((static_cast<long>(g) * d * hop) % n + n) % n;
          acc += c * phasor[static_cast<std::size_t>(m)] * full(g, src);
        }
        out(f, t) += acc;
      }
    }
  };

  if (policy == ExecPolicy::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < frames; ++t) {
      frame_kernel(t);
    }
  } else {
    for (int t = 0; t < frames; ++t) {
      frame_kernel(t);
    }
  }
  return spec.with_data(std::move(out));
}

} // namespace nmfsep
