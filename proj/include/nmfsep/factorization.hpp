#pragma once

#include "nmfsep/common.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace nmfsep {

enum class Divergence { kl, is, weighted_euclidean };

std::string_view to_string(Divergence kind);
Divergence divergence_from_string(std::string_view name);

/// Nonnegative factors of V ~ W H. W is F x K, H is K x T.
struct FactorPair {
  RealMatrix w;
  RealMatrix h;

  int components() const { return static_cast<int>(w.cols()); }
  RealMatrix product() const { return w * h; }
  /// V_k = W_k H_k for one component.
  RealMatrix component(int k) const { return w.col(k) * h.row(k); }
  /// K (F + T) / (F T); well below one for a genuine rank reduction.
  double compression_ratio() const;
};

/// Elementwise divergence D(V | Vhat) summed over all entries.
///
/// KL uses 0 ln(0 / y) = 0. IS clamps V entries at kEpsilon so that zero
/// data stays finite. `weights` is only read for weighted_euclidean, where a
/// missing matrix means unit weights.
double divergence(const RealMatrix &v, const RealMatrix &vhat, Divergence kind,
                  const RealMatrix *weights = nullptr);

/// One multiplicative-update sweep: W first, then H.
///
/// Every rule is a majorization-minimization step, so the divergence never
/// increases. For IS the exponent 1/2 update is used; the classic exponent
/// 1 heuristic has no descent guarantee.
FactorPair mur_step(const RealMatrix &v, const FactorPair &factors, Divergence kind,
                    const RealMatrix *weights = nullptr);

/// Update only H (W held fixed); used by supervised variants.
void mur_update_h(const RealMatrix &v, FactorPair &factors, Divergence kind,
                  const RealMatrix *weights = nullptr);
void mur_update_w(const RealMatrix &v, FactorPair &factors, Divergence kind,
                  const RealMatrix *weights = nullptr);

/// Uniform (0, 1] entries scaled so mean(W H) matches mean(V).
FactorPair random_factors(const RealMatrix &v, int components, std::uint64_t seed);

struct NmfOptions {
  int components = 2;
  Divergence kind = Divergence::kl;
  int iterations = 30;
  std::uint64_t seed = 0;
};

struct NmfResult {
  FactorPair factors;
  /// Divergence before the first sweep and after each sweep.
  std::vector<double> trajectory;
};

NmfResult fit_nmf(const RealMatrix &v, const NmfOptions &options,
                  const RealMatrix *weights = nullptr);

/// Runs `iterations` sweeps from the given factors.
NmfResult refine_nmf(const RealMatrix &v, FactorPair factors, Divergence kind,
                     int iterations, const RealMatrix *weights = nullptr);

} // namespace nmfsep
