#include "fft.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

namespace nmfsep::detail {
namespace {

struct PlanPair {
  fftw_plan forward;
  fftw_plan inverse;
};

std::mutex &plan_mutex() {
  static std::mutex m;
  return m;
}

// Plans live for the life of the process.
PlanPair plans_for(int n) {
  static std::map<int, PlanPair> cache;
  std::lock_guard lock(plan_mutex());
  if (auto it = cache.find(n); it != cache.end()) {
    return it->second;
  }
  std::vector<double> real(static_cast<std::size_t>(n));
  auto *spec = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  PlanPair p{};
  p.forward = fftw_plan_dft_r2c_1d(n, real.data(), spec, flags);
  p.inverse = fftw_plan_dft_c2r_1d(n, spec, real.data(),
                                   flags | FFTW_DESTROY_INPUT);
  fftw_free(spec);
  if (p.forward == nullptr || p.inverse == nullptr) {
    throw Error("FFTW planning failed for size " + std::to_string(n));
  }
  cache.emplace(n, p);
  return p;
}

} // namespace

RealFft::RealFft(int size) : size_(size) {
  require(size >= 2 && size % 2 == 0, "FFT size must be a positive even integer");
  const PlanPair p = plans_for(size);
  forward_ = p.forward;
  inverse_ = p.inverse;
}

void RealFft::forward(const double *in, Complex *out) const {
  fftw_execute_dft_r2c(forward_, const_cast<double *>(in),
                       reinterpret_cast<fftw_complex *>(out));
}

void RealFft::inverse(const Complex *in, Complex *scratch, double *out) const {
  const int bins = size_ / 2 + 1;
  std::copy(in, in + bins, scratch);
  scratch[0].imag(0.0);
  scratch[bins - 1].imag(0.0);
  fftw_execute_dft_c2r(inverse_, reinterpret_cast<fftw_complex *>(scratch), out);
}

} // namespace nmfsep::detail
