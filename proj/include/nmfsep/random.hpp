#pragma once

#include <cstdint>
#include <random>

namespace nmfsep {

/// Deterministic random source.
///
/// std::mt19937_64's output sequence is fixed by the standard, but the
/// distributions in <random> are implementation-defined, so the transforms
/// to uniform and Gaussian variates are done here. This keeps every seeded
/// result reproducible across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on (0, 1].
  double uniform_open_closed() {
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer uniform on [lo, hi].
  int uniform_int(int lo, int hi);

  /// Standard normal (Box-Muller, one variate per call pair cached).
  double normal();

  std::uint64_t next_u64() { return engine_(); }

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace nmfsep
