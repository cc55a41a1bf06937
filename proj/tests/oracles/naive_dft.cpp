#include "oracles/naive_dft.hpp"

#include <cmath>
#include <numbers>

namespace oracle {

std::vector<Complex> naive_dft(const std::vector<double> &x) {
  const auto n = x.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{};
    for (std::size_t i = 0; i < n; ++i) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>((k * i) % n) /
                       static_cast<double>(n);
      acc += x[i] * Complex(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

nmfsep::ComplexMatrix naive_stft(const std::vector<double> &x, const nmfsep::StftPlan &plan) {
  const int n = plan.window_length();
  const int hop = plan.hop();
  std::vector<double> padded(x.size() + 2 * static_cast<std::size_t>(n), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    padded[i + static_cast<std::size_t>(n)] = x[i];
  }
  const int frames = static_cast<int>((padded.size() - static_cast<std::size_t>(n)) /
                                      static_cast<std::size_t>(hop)) + 1;
  nmfsep::ComplexMatrix out(n / 2 + 1, frames);
  for (int t = 0; t < frames; ++t) {
    std::vector<double> frame(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      frame[static_cast<std::size_t>(i)] =
          plan.window()[static_cast<std::size_t>(i)] *
          padded[static_cast<std::size_t>(t * hop + i)];
    }
    const auto spectrum = naive_dft(frame);
    for (int k = 0; k <= n / 2; ++k) {
      out(k, t) = spectrum[static_cast<std::size_t>(k)];
    }
  }
  return out;
}

std::vector<double> naive_istft(const nmfsep::ComplexMatrix &spec, const nmfsep::StftPlan &plan,
                                std::size_t length) {
  const int n = plan.window_length();
  const int hop = plan.hop();
  std::vector<double> padded(length + 2 * static_cast<std::size_t>(n), 0.0);
  for (int t = 0; t < spec.cols(); ++t) {
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) {
        Complex c;
        if (k == 0 || k == n / 2) {
          c = {spec(k, t).real(), 0.0};
        } else if (k < n / 2) {
          c = spec(k, t);
        } else {
          c = std::conj(spec(n - k, t));
        }
        const double a = 2.0 * std::numbers::pi * static_cast<double>((k * i) % n) / n;
        acc += (c * Complex(std::cos(a), std::sin(a))).real();
      }
      const auto p = static_cast<std::size_t>(t * hop + i);
      if (p < padded.size()) {
        padded[p] += plan.window()[static_cast<std::size_t>(i)] * acc / n;
      }
    }
  }
  return {padded.begin() + n, padded.begin() + n + static_cast<long>(length)};
}

double full_spectrum_distance(const nmfsep::ComplexMatrix &a, const nmfsep::ComplexMatrix &b,
                              int window_length) {
  const int n = window_length;
  double acc = 0.0;
  for (int t = 0; t < a.cols(); ++t) {
    for (int k = 0; k < n; ++k) {
      const int src = k <= n / 2 ? k : n - k;
      Complex da = a(src, t);
      Complex db = b(src, t);
      if (k > n / 2) {
        da = std::conj(da);
        db = std::conj(db);
      }
      acc += std::norm(da - db);
    }
  }
  return acc;
}

} // namespace oracle
