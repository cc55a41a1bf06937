#pragma once

#include "nmfsep/common.hpp"

#include <fftw3.h>

namespace nmfsep::detail {

/// Unnormalized real FFT of a fixed even size backed by FFTW.
///
/// Plans are cached per size and created under a lock; execution uses
/// FFTW's new-array interface, which is safe to call concurrently.
class RealFft {
public:
  explicit RealFft(int size);

  int size() const { return size_; }

  /// size real samples -> size / 2 + 1 bins.
  void forward(const double *in, Complex *out) const;
  /// size / 2 + 1 bins -> size real samples, without the 1/size factor.
  /// The imaginary parts of the DC and Nyquist bins are ignored.
  /// `scratch` must hold size / 2 + 1 values; it is overwritten.
  void inverse(const Complex *in, Complex *scratch, double *out) const;

private:
  int size_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

} // namespace nmfsep::detail
