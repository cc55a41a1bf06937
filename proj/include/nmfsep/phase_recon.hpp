#pragma once

#include "nmfsep/factorization.hpp"
#include "nmfsep/tf_transform.hpp"

#include <vector>

namespace nmfsep {

/// Per-source complex spectrograms with their resynthesized signals.
struct SourceEstimateSet {
  std::vector<Spectrogram> spectrograms;
  std::vector<Signal> signals;
  Spectrogram mixture;

  /// Builds the set and resynthesizes every signal with istft.
  static SourceEstimateSet from_spectrograms(const Spectrogram &mixture,
                                             std::vector<Spectrogram> spectrograms,
                                             ExecPolicy policy = ExecPolicy::parallel);

  int sources() const { return static_cast<int>(spectrograms.size()); }
};

/// grouping[j] is the source that NMF component j belongs to.
using Grouping = std::vector<int>;

/// One component per source, the default.
Grouping one_component_per_source(int components);

/// Per-source model spectrograms sum_{j in group k} W_j H_j.
std::vector<RealMatrix> grouped_components(const FactorPair &factors, const Grouping &grouping);

/// X_k = (V_k / sum_l V_l) X for arbitrary nonnegative source models.
SourceEstimateSet wiener_separate(const Spectrogram &mixture,
                                  const std::vector<RealMatrix> &source_models);

SourceEstimateSet wiener_separate(const Spectrogram &mixture, const FactorPair &factors,
                                  const Grouping &grouping);

/// Default initializer for the iterative phase methods; same as Wiener.
SourceEstimateSet init_from_wiener(const Spectrogram &mixture, const FactorPair &factors,
                                   const Grouping &grouping);

struct PhaseReconResult {
  Spectrogram estimate;
  /// ||V - |F(X^i)||, full-spectrum weighted, for i = 0 .. iterations.
  std::vector<double> magnitude_distance;
  /// ||X^i - F(X^i)||^2 for i = 0 .. iterations.
  std::vector<double> inconsistency;
};

/// Griffin-Lim with fixed magnitude: X <- V F(X) / |F(X)|.
///
/// Bins where |F(X)| vanishes keep the phase of the current iterate
/// (angle 0 when that is undefined too).
PhaseReconResult griffin_lim_separate(const RealMatrix &magnitude, const Spectrogram &init,
                                      int iterations);

/// Le Roux phase updates: X <- V angle(kernel * X). With a full-support
/// kernel this is the Griffin-Lim sequence.
PhaseReconResult leroux_separate(const RealMatrix &magnitude, const Spectrogram &init,
                                 int iterations, const LerouxKernel &kernel);

enum class PhaseInit {
  /// Fixed magnitude |X_k| of the Wiener estimate, Wiener phase.
  wiener_magnitude,
  /// Fixed magnitude V_k from the NMF, mixture phase.
  nmf_magnitude,
};

enum class PhaseAlgorithm { griffin_lim, leroux };

struct PhaseReconOptions {
  PhaseAlgorithm algorithm = PhaseAlgorithm::griffin_lim;
  PhaseInit init = PhaseInit::wiener_magnitude;
  int iterations = 50;
  /// Only used by the Le Roux algorithm; zero widths select the default.
  KernelTruncation truncation{0, 0};
};

/// Full NMF + phase reconstruction separation; sources are processed
/// independently.
SourceEstimateSet phase_reconstruct_sources(const Spectrogram &mixture,
                                            const std::vector<RealMatrix> &source_models,
                                            const PhaseReconOptions &options);

} // namespace nmfsep
