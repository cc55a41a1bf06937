#pragma once

#include "nmfsep/common.hpp"

#include <Eigen/Cholesky>

#include <span>
#include <vector>

namespace nmfsep {

/// Orthogonal split of an estimate: est = target + interference + artifact.
struct Decomposition {
  Signal target;
  Signal interference;
  Signal artifact;
};

struct SeparationScores {
  /// Indexed by reference (true source).
  std::vector<double> sdr;
  std::vector<double> sir;
  std::vector<double> sar;
  /// permutation[i] is the reference matched to estimate i.
  std::vector<int> permutation;
  /// True when a Gram matrix needed the ridge fallback.
  bool regularized = false;
};

/// Ratios are clamped to +-kMaxDb.
inline constexpr double kMaxDb = 300.0;

inline constexpr int kDefaultFilterLength = 512;

/// Largest source count accepted by the exhaustive permutation search.
inline constexpr int kMaxPermutationSources = 6;

/// 10 log10(num / den) with energies below 1e-20 of `scale` taken as zero
/// and the result clamped to [-kMaxDb, kMaxDb].
double energy_ratio_db(double num, double den, double scale);

/// Projections onto spans of delayed references.
///
/// Delay tau shifts a reference right by tau samples, truncating at the
/// end. The Gram matrices of the full and per-reference subspaces are
/// factorized once, so one evaluator serves any number of estimates.
class BssEvaluator {
public:
  BssEvaluator(std::vector<Signal> references, int filter_length = kDefaultFilterLength);

  int sources() const { return static_cast<int>(refs_.size()); }
  std::size_t length() const { return length_; }
  int filter_length() const { return taps_; }
  /// A singular Gram matrix was regularized with a ridge of 1e-10 trace.
  bool regularized() const { return regularized_; }

  Decomposition decompose(std::span<const double> estimate, int target) const;

  SeparationScores scores(const std::vector<Signal> &estimates,
                          ExecPolicy policy = ExecPolicy::parallel) const;

private:
  struct Factor {
    Eigen::LDLT<RealMatrix> ldlt;
    bool ridge = false;
  };

  // Inner products of the estimate with every delayed reference.
  RealVector correlate(std::span<const double> estimate) const;
  // sum_j sum_tau coeffs(j, tau) s_j(n - tau) over the given references.
  Signal synthesize(const RealVector &coeffs, int first, int count) const;
  Factor factorize(const RealMatrix &gram);

  std::vector<Signal> refs_;
  std::size_t length_ = 0;
  int taps_ = 1;
  Factor full_;
  std::vector<Factor> single_;
  bool regularized_ = false;
};

/// Decomposition of `estimate` with `references[target]` as its source.
Decomposition decompose_estimate(std::span<const double> estimate,
                                 const std::vector<Signal> &references, int target,
                                 int filter_length = kDefaultFilterLength);

/// SDR / SIR / SAR with the estimate-to-reference assignment that maximizes
/// the mean SIR over all K! permutations (K <= 6).
SeparationScores compute_scores(const std::vector<Signal> &estimates,
                                const std::vector<Signal> &references,
                                int filter_length = kDefaultFilterLength,
                                ExecPolicy policy = ExecPolicy::parallel);

} // namespace nmfsep
