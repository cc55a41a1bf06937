#pragma once

// Test-only reference transforms. These use O(N^2) DFT sums and their own
// framing loops, and share nothing with the library's FFT path beyond the
// plan's window values.

#include "nmfsep/tf_transform.hpp"

#include <vector>

namespace oracle {

using nmfsep::Complex;

/// Full N-point DFT of a real sequence.
std::vector<Complex> naive_dft(const std::vector<double> &x);

/// One-sided STFT built frame by frame with naive_dft.
nmfsep::ComplexMatrix naive_stft(const std::vector<double> &x, const nmfsep::StftPlan &plan);

/// Overlap-add inverse using the full Hermitian spectrum and a naive IDFT.
std::vector<double> naive_istft(const nmfsep::ComplexMatrix &spec, const nmfsep::StftPlan &plan,
                                std::size_t length);

/// sum over the full (two-sided) spectrum of |a - b|^2.
double full_spectrum_distance(const nmfsep::ComplexMatrix &a, const nmfsep::ComplexMatrix &b,
                              int window_length);

} // namespace oracle
