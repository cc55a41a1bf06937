#include "nmfsep/bss_eval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <string>

namespace nmfsep {
namespace {

double energy(const Signal &x) {
  double e = 0.0;
  for (double v : x) {
    e += v * v;
  }
  return e;
}

Signal add(const Signal &a, const Signal &b) {
  Signal out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = a[i] + b[i];
  }
  return out;
}

// sum_{n >= tau} a(n) b(n - tau) for tau = 0 .. taps-1.
RealVector lagged_products(const Signal &a, const Signal &b, int taps) {
  RealVector out(taps);
  const std::size_t n = a.size();
  for (int tau = 0; tau < taps; ++tau) {
    double acc = 0.0;
    for (std::size_t i = static_cast<std::size_t>(tau); i < n; ++i) {
      acc += a[i] * b[i - static_cast<std::size_t>(tau)];
    }
    out(tau) = acc;
  }
  return out;
}

} // namespace

double energy_ratio_db(double num, double den, double scale) {
  const double floor = 1e-20 * (scale > 0.0 ? scale : 1.0);
  const bool num_zero = num <= floor;
  const bool den_zero = den <= floor;
  if (num_zero) {
    return -kMaxDb;
  }
  if (den_zero) {
    return kMaxDb;
  }
  return std::clamp(10.0 * std::log10(num / den), -kMaxDb, kMaxDb);
}

BssEvaluator::BssEvaluator(std::vector<Signal> references, int filter_length)
    : refs_(std::move(references)), taps_(filter_length) {
  require(!refs_.empty(), "bss_eval: at least one reference is required");
  require(taps_ >= 1, "bss_eval: filter length must be at least 1");
  length_ = refs_.front().size();
  require(length_ >= static_cast<std::size_t>(taps_),
          "bss_eval: filter length exceeds the signal length");
  for (const auto &r : refs_) {
    require(r.size() == length_, "bss_eval: references must have equal lengths");
    for (double v : r) {
      require(std::isfinite(v), "bss_eval: non-finite reference sample");
    }
  }

  const int k = sources();
  const auto dim = static_cast<Eigen::Index>(k) * taps_;
  RealMatrix gram(dim, dim);
  const std::size_t last = length_ - 1;
  for (int i = 0; i < k; ++i) {
    for (int j = i; j < k; ++j) {
      const auto &si = refs_[static_cast<std::size_t>(i)];
      const auto &sj = refs_[static_cast<std::size_t>(j)];
      // G(t1, t2) = sum_n si(n - t1) sj(n - t2); first row and column are
      // lagged products, the rest follows along diagonals:
      // G(t1 + 1, t2 + 1) = G(t1, t2) - si(last - t1) sj(last - t2).
      RealMatrix g(taps_, taps_);
      g.row(0) = lagged_products(si, sj, taps_).transpose();
      g.col(0) = lagged_products(sj, si, taps_);
      for (int t1 = 0; t1 + 1 < taps_; ++t1) {
        for (int t2 = 0; t2 + 1 < taps_; ++t2) {
          g(t1 + 1, t2 + 1) = g(t1, t2) - si[last - static_cast<std::size_t>(t1)] *
                                              sj[last - static_cast<std::size_t>(t2)];
        }
      }
      gram.block(i * taps_, j * taps_, taps_, taps_) = g;
      gram.block(j * taps_, i * taps_, taps_, taps_) = g.transpose();
    }
  }
  full_ = factorize(gram);
  for (int j = 0; j < k; ++j) {
    single_.push_back(factorize(gram.block(j * taps_, j * taps_, taps_, taps_)));
  }
}

BssEvaluator::Factor BssEvaluator::factorize(const RealMatrix &gram) {
  Factor f{Eigen::LDLT<RealMatrix>(gram), false};
  const double trace = gram.trace();
  const bool singular = f.ldlt.info() != Eigen::Success || !f.ldlt.isPositive() ||
                        f.ldlt.rcond() < 1e-12 || trace <= 0.0;
  if (singular) {
    RealMatrix ridged = gram;
    ridged.diagonal().array() += 1e-10 * std::max(trace, 1e-300);
    f.ldlt.compute(ridged);
    f.ridge = true;
    regularized_ = true;
  }
  return f;
}

RealVector BssEvaluator::correlate(std::span<const double> estimate) const {
  RealVector out(static_cast<Eigen::Index>(sources()) * taps_);
  for (int j = 0; j < sources(); ++j) {
    const auto &s = refs_[static_cast<std::size_t>(j)];
    for (int tau = 0; tau < taps_; ++tau) {
      double acc = 0.0;
      for (std::size_t n = static_cast<std::size_t>(tau); n < length_; ++n) {
        acc += estimate[n] * s[n - static_cast<std::size_t>(tau)];
      }
      out(j * taps_ + tau) = acc;
    }
  }
  return out;
}

Signal BssEvaluator::synthesize(const RealVector &coeffs, int first, int count) const {
  Signal out(length_, 0.0);
  for (int j = 0; j < count; ++j) {
    const auto &s = refs_[static_cast<std::size_t>(first + j)];
    for (int tau = 0; tau < taps_; ++tau) {
      const double c = coeffs(j * taps_ + tau);
      if (c == 0.0) {
        continue;
      }
      for (std::size_t n = static_cast<std::size_t>(tau); n < length_; ++n) {
        out[n] += c * s[n - static_cast<std::size_t>(tau)];
      }
    }
  }
  return out;
}

Decomposition BssEvaluator::decompose(std::span<const double> estimate, int target) const {
  require(estimate.size() == length_, "bss_eval: estimate length differs from the references");
  require(target >= 0 && target < sources(), "bss_eval: target index out of range");
  for (double v : estimate) {
    require(std::isfinite(v), "bss_eval: non-finite estimate sample");
  }
  const RealVector d = correlate(estimate);
  const RealVector c_target =
      single_[static_cast<std::size_t>(target)].ldlt.solve(d.segment(target * taps_, taps_));
  const RealVector c_all = full_.ldlt.solve(d);

  Decomposition out;
  out.target = synthesize(c_target, target, 1);
  const Signal all = synthesize(c_all, 0, sources());
  out.interference.resize(length_);
  out.artifact.resize(length_);
  for (std::size_t n = 0; n < length_; ++n) {
    out.interference[n] = all[n] - out.target[n];
    out.artifact[n] = estimate[n] - all[n];
  }
  return out;
}

SeparationScores BssEvaluator::scores(const std::vector<Signal> &estimates,
                                      ExecPolicy policy) const {
  const int k = sources();
  require(static_cast<int>(estimates.size()) == k,
          "bss_eval: need as many estimates as references");
  require(k <= kMaxPermutationSources,
          "bss_eval: permutation search is limited to " +
              std::to_string(kMaxPermutationSources) +
              " sources; pre-assign estimates and score them one by one");
  for (const auto &e : estimates) {
    require(e.size() == length_, "bss_eval: estimate length differs from the references");
  }

  // ratios[i * k + j] = (sdr, sir, sar) of estimate i against reference j.
  struct Triple {
    double sdr, sir, sar;
  };
  std::vector<Triple> ratios(static_cast<std::size_t>(k * k));
  const auto body = [&](int idx) {
    const int i = idx / k;
    const int j = idx % k;
    const auto &est = estimates[static_cast<std::size_t>(i)];
    const auto parts = decompose(est, j);
    const double scale = energy(est);
    const double target = energy(parts.target);
    const double interf = energy(parts.interference);
    const double artif = energy(parts.artifact);
    ratios[static_cast<std::size_t>(idx)] = {
        energy_ratio_db(target, energy(add(parts.interference, parts.artifact)), scale),
        energy_ratio_db(target, interf, scale),
        energy_ratio_db(energy(add(parts.target, parts.interference)), artif, scale)};
  };
  if (policy == ExecPolicy::parallel) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (int idx = 0; idx < k * k; ++idx) {
      try {
        body(idx);
      } catch (...) {
#pragma omp critical(nmfsep_bss_failure)
        if (!failure) {
          failure = std::current_exception();
        }
      }
    }
    if (failure) {
      std::rethrow_exception(failure);
    }
  } else {
    for (int idx = 0; idx < k * k; ++idx) {
      body(idx);
    }
  }

  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_sir = -std::numeric_limits<double>::infinity();
  do {
    double sir = 0.0;
    for (int i = 0; i < k; ++i) {
      sir += ratios[static_cast<std::size_t>(i * k + perm[static_cast<std::size_t>(i)])].sir;
    }
    // Strict improvement keeps the first (identity-most) ordering on ties.
    if (sir > best_sir) {
      best_sir = sir;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  SeparationScores out;
  out.sdr.resize(static_cast<std::size_t>(k));
  out.sir.resize(static_cast<std::size_t>(k));
  out.sar.resize(static_cast<std::size_t>(k));
  out.permutation = best;
  out.regularized = regularized_;
  for (int i = 0; i < k; ++i) {
    const int j = best[static_cast<std::size_t>(i)];
    const auto &r = ratios[static_cast<std::size_t>(i * k + j)];
    out.sdr[static_cast<std::size_t>(j)] = r.sdr;
    out.sir[static_cast<std::size_t>(j)] = r.sir;
    out.sar[static_cast<std::size_t>(j)] = r.sar;
  }
  return out;
}

Decomposition decompose_estimate(std::span<const double> estimate,
                                 const std::vector<Signal> &references, int target,
                                 int filter_length) {
  return BssEvaluator(references, filter_length).decompose(estimate, target);
}

SeparationScores compute_scores(const std::vector<Signal> &estimates,
                                const std::vector<Signal> &references, int filter_length,
                                ExecPolicy policy) {
  require(!references.empty(), "bss_eval: at least one source is required");
  require(static_cast<int>(references.size()) <= kMaxPermutationSources,
          "bss_eval: permutation search is limited to " +
              std::to_string(kMaxPermutationSources) +
              " sources; pre-assign estimates and score them one by one");
  return BssEvaluator(references, filter_length).scores(estimates, policy);
}

} // namespace nmfsep
