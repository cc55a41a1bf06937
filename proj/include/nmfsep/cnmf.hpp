#pragma once

#include "nmfsep/phase_recon.hpp"
#include "nmfsep/tf_transform.hpp"

#include <cstdint>
#include <vector>

namespace nmfsep {

/// Complex NMF: X(f,t) ~ sum_k W(f,k) H(k,t) exp(i phi_k(f,t)).
struct CnmfModel {
  RealMatrix w;
  RealMatrix h;
  /// Unit-modulus phase fields, one F x T matrix per component.
  std::vector<ComplexMatrix> phases;
  /// Weight of the consistency penalty; 0 gives plain CNMF.
  double gamma = 0.0;

  int components() const { return static_cast<int>(w.cols()); }
  /// W_k H_k exp(i phi_k).
  ComplexMatrix component(int k) const;
  ComplexMatrix prediction() const;
};

struct CnmfStepOptions {
  /// L1 weight on H; the reference model's sparsity term, off by default.
  double sparsity = 0.0;
  /// When false only the phases move (supervised magnitudes).
  bool update_factors = true;
};

/// ||X - Xhat||^2 (plain sum over one-sided bins)
///   + sparsity * sum(H) + gamma * sum_k inconsistency(X_k).
double cnmf_objective(const Spectrogram &mixture, const CnmfModel &model,
                      double sparsity = 0.0);

/// Residual shares Xbar_k = W_k H_k exp(i phi_k) + beta_k (X - Xhat);
/// they sum to X.
std::vector<ComplexMatrix> cnmf_residual_shares(const Spectrogram &mixture,
                                                const CnmfModel &model);

/// One auxiliary-function sweep.
///
/// The residual X - Xhat is shared out with weights beta_k = V_k / sum V;
/// phases move to the angle of each share (blended with F(X_k) when
/// gamma > 0); then W and H are refitted in closed form, weighted least
/// squares with weights 1 / beta_k. For gamma = 0 the objective never
/// increases.
CnmfModel cnmf_step(const Spectrogram &mixture, const CnmfModel &model,
                    const CnmfStepOptions &options = {});

struct CnmfOptions {
  int components = 2;
  double gamma = 0.0;
  int iterations = 30;
  std::uint64_t seed = 0;
  CnmfStepOptions step{};
};

struct CnmfResult {
  CnmfModel model;
  /// Objective before the first sweep and after each sweep.
  std::vector<double> trajectory;
};

/// Random scale-matched magnitudes, every phase field set to the mixture
/// phase.
CnmfResult fit_cnmf(const Spectrogram &mixture, const CnmfOptions &options);

CnmfResult refine_cnmf(const Spectrogram &mixture, CnmfModel model, int iterations,
                       const CnmfStepOptions &options = {});

/// Source k gets the sum of its components' complex terms.
SourceEstimateSet cnmf_separate(const Spectrogram &mixture, const CnmfModel &model,
                                const Grouping &grouping);

} // namespace nmfsep
