#pragma once

#include "nmfsep/factorization.hpp"
#include "nmfsep/phase_recon.hpp"
#include "nmfsep/tf_transform.hpp"

#include <cstdint>
#include <vector>

namespace nmfsep {

/// High resolution NMF.
///
/// In every frequency band f each component follows
///   X_k(f,t) = b_k(f,t) + sum_{p=1..P(k,f)} a_p(k,f) X_k(f,t-p),
/// with b_k(f,t) circular complex Gaussian of variance V_k = W_k H_k, and
/// the observation is X(f,t) = sum_k X_k(f,t) + n(f,t) with white noise of
/// variance noise_var. Samples before t = 0 are zero.
struct HrnmfModel {
  RealMatrix w; ///< F x K
  RealMatrix h; ///< K x T
  /// ar[k][f] holds a_1 .. a_P for component k in band f; its size is P(k,f).
  std::vector<std::vector<ComplexVector>> ar;
  double noise_var = 1.0;

  /// All coefficients zero, P(k,f) = order everywhere.
  static HrnmfModel from_factors(const FactorPair &factors, double noise_var, int order = 1);

  int components() const { return static_cast<int>(w.cols()); }
  int bins() const { return static_cast<int>(w.rows()); }
  int frames() const { return static_cast<int>(h.cols()); }
  int order(int k, int f) const {
    return static_cast<int>(ar[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)].size());
  }
  /// V_k(f, t) for band f, K x T, floored at kEpsilon.
  RealMatrix band_variances(int f) const;
  /// Count of (k, f) whose AR filter has a pole on or outside the unit
  /// circle. Stability is not enforced; this is a diagnostic only.
  int unstable_filters() const;
};

/// Parameters of one frequency band.
struct BandModel {
  std::vector<ComplexVector> ar; ///< per component, length P(k)
  RealMatrix variances;          ///< K x T
  double noise_var = 1.0;
};

BandModel band_model(const HrnmfModel &model, int f);

/// Exact posterior of one band given its observations.
struct BandPosterior {
  ComplexMatrix means;        ///< K x T, E[X_k(t) | x]
  RealMatrix second_moments;  ///< K x T, E[|X_k(t)|^2 | x]
  ComplexMatrix lag1;         ///< K x T, E[X_k(t) conj X_k(t-1) | x]; column 0 is zero
  double loglik = 0.0;        ///< log p(x) under the band model

  // Smoothed moments of the stacked state [X_k(t), ..., X_k(t-L_k+1)]_k,
  // L_k = max(1, P(k)); used by the M-step for orders above one.
  std::vector<ComplexVector> state_mean;
  std::vector<ComplexMatrix> state_cov;
  /// Cov(s_t, s_{t-1} | x); entry 0 is zero.
  std::vector<ComplexMatrix> state_cross;
  /// E[|x(t) - sum_k X_k(t)|^2 | x], the posterior residual power.
  RealVector residual_power;
};

/// Kalman filter plus Rauch-Tung-Striebel smoother over the stacked
/// per-component AR states.
BandPosterior kalman_smooth_band(const ComplexVector &x, const BandModel &model);

struct HrnmfPosterior {
  std::vector<BandPosterior> bands;
  double loglik = 0.0;
};

HrnmfPosterior hrnmf_e_step(const Spectrogram &mixture, const HrnmfModel &model,
                            ExecPolicy policy = ExecPolicy::parallel);

struct EmOptions {
  /// Keep every AR coefficient at its current value.
  bool freeze_ar = false;
  bool update_w = true;
  bool update_h = true;
  bool update_noise = true;
};

/// M-step from a computed posterior: AR normal equations, one IS-NMF MUR
/// sweep of each W_k H_k toward the posterior innovation powers, then the
/// noise variance as the mean posterior residual power.
HrnmfModel hrnmf_m_step(const HrnmfModel &model, const HrnmfPosterior &posterior,
                        const EmOptions &options = {});

/// Posterior innovation powers E[|X_k(f,t) - sum_p a_p X_k(f,t-p)|^2],
/// one F x T matrix per component, for the coefficients in `model`.
std::vector<RealMatrix> innovation_powers(const HrnmfModel &model,
                                          const HrnmfPosterior &posterior);

/// One full EM iteration; `loglik` receives log p(X) under the input model.
HrnmfModel em_step(const Spectrogram &mixture, const HrnmfModel &model,
                   const EmOptions &options = {}, double *loglik = nullptr,
                   ExecPolicy policy = ExecPolicy::parallel);

enum class HrnmfInit { random, is_nmf, kl_nmf };

struct HrnmfOptions {
  int components = 2;
  int iterations = 30;
  HrnmfInit init = HrnmfInit::kl_nmf;
  /// MUR sweeps of the initializing NMF.
  int init_iterations = 30;
  int order = 1;
  /// Initial noise variance as a fraction of mean |X|^2.
  double noise_fraction = 0.01;
  std::uint64_t seed = 0;
  EmOptions em{};
};

struct HrnmfResult {
  HrnmfModel model;
  /// log p(X) before each EM step and after the last one.
  std::vector<double> loglik;
};

/// Variance factors for the chosen initialization: KL-NMF on |X| with the
/// factors squared, IS-NMF on |X|^2, or random scale-matched factors.
FactorPair hrnmf_initial_factors(const Spectrogram &mixture, const HrnmfOptions &options);

HrnmfResult fit_hrnmf(const Spectrogram &mixture, const HrnmfOptions &options);

/// EM from explicit variance factors (a = 0).
HrnmfResult fit_hrnmf(const Spectrogram &mixture, const FactorPair &init,
                      const HrnmfOptions &options);

HrnmfResult refine_hrnmf(const Spectrogram &mixture, HrnmfModel model, int iterations,
                         const EmOptions &options = {},
                         ExecPolicy policy = ExecPolicy::parallel);

/// Posterior-mean separation; source k collects the components mapped to
/// it by `grouping`.
SourceEstimateSet hrnmf_separate(const Spectrogram &mixture, const HrnmfModel &model,
                                 const Grouping &grouping,
                                 ExecPolicy policy = ExecPolicy::parallel);

/// Stacks per-source models (learned on isolated sources) into one
/// mixture model with the given noise variance.
HrnmfModel stack_models(const std::vector<HrnmfModel> &models, double noise_var);

} // namespace nmfsep
