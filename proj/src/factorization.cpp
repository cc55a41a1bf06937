#include "nmfsep/factorization.hpp"

#include "nmfsep/random.hpp"

#include <cmath>
#include <string>

namespace nmfsep {
namespace {

RealMatrix floored(const RealMatrix &m) { return m.cwiseMax(kEpsilon); }

void check_shapes(const RealMatrix &v, const FactorPair &f) {
  require(f.w.rows() == v.rows() && f.h.cols() == v.cols() && f.w.cols() == f.h.rows(),
          "factor shapes do not match the data matrix");
}

// Numerator and denominator of the multiplicative ratio for H, given
// Lambda = W H. The W ratio is the transposed problem.
struct Ratio {
  RealMatrix num;
  RealMatrix den;
};

Ratio h_ratio(const RealMatrix &v, const RealMatrix &w, const RealMatrix &lambda,
              Divergence kind, const RealMatrix *weights) {
  switch (kind) {
  case Divergence::kl:
    return {w.transpose() * v.cwiseQuotient(lambda),
            w.transpose() * RealMatrix::Ones(v.rows(), v.cols())};
  case Divergence::is: {
    const RealMatrix inv = lambda.cwiseInverse();
    return {w.transpose() * floored(v).cwiseProduct(inv).cwiseProduct(inv),
            w.transpose() * inv};
  }
  case Divergence::weighted_euclidean:
    if (weights != nullptr) {
      return {w.transpose() * weights->cwiseProduct(v),
              w.transpose() * weights->cwiseProduct(lambda)};
    }
    return {w.transpose() * v, w.transpose() * lambda};
  }
  throw InvalidArgument("unknown divergence");
}

void apply_ratio(RealMatrix &target, const Ratio &r, Divergence kind) {
  const RealMatrix ratio = r.num.cwiseQuotient(r.den.cwiseMax(kEpsilon));
  if (kind == Divergence::is) {
    target = target.cwiseProduct(ratio.cwiseSqrt());
  } else {
    target = target.cwiseProduct(ratio);
  }
  target = target.cwiseMax(kEpsilon);
}

} // namespace

std::string_view to_string(Divergence kind) {
  switch (kind) {
  case Divergence::kl:
    return "KL";
  case Divergence::is:
    return "IS";
  case Divergence::weighted_euclidean:
    return "EUC-weighted";
  }
  return "?";
}

Divergence divergence_from_string(std::string_view name) {
  if (name == "KL" || name == "kl") {
    return Divergence::kl;
  }
  if (name == "IS" || name == "is") {
    return Divergence::is;
  }
  if (name == "EUC-weighted" || name == "euc") {
    return Divergence::weighted_euclidean;
  }
  throw InvalidArgument("unknown divergence '" + std::string(name) + "'");
}

double FactorPair::compression_ratio() const {
  const auto f = static_cast<double>(w.rows());
  const auto t = static_cast<double>(h.cols());
  return components() * (f + t) / (f * t);
}

double divergence(const RealMatrix &v, const RealMatrix &vhat, Divergence kind,
                  const RealMatrix *weights) {
  require(v.rows() == vhat.rows() && v.cols() == vhat.cols(),
          "divergence: shape mismatch");
  require((vhat.array() > 0.0).all(), "divergence: Vhat must be strictly positive");
  require(v.allFinite() && vhat.allFinite(), "divergence: non-finite input");
  double total = 0.0;
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const double x = v(i, j);
      const double y = vhat(i, j);
      switch (kind) {
      case Divergence::kl:
        total += (x > 0.0 ? x * std::log(x / y) : 0.0) - x + y;
        break;
      case Divergence::is: {
        const double r = std::max(x, kEpsilon) / y;
        total += r - std::log(r) - 1.0;
        break;
      }
      case Divergence::weighted_euclidean: {
        const double omega = weights != nullptr ? (*weights)(i, j) : 1.0;
        total += omega * (x - y) * (x - y);
        break;
      }
      }
    }
  }
  return total;
}

void mur_update_h(const RealMatrix &v, FactorPair &factors, Divergence kind,
                  const RealMatrix *weights) {
  const RealMatrix lambda = floored(factors.w * factors.h);
  apply_ratio(factors.h, h_ratio(v, factors.w, lambda, kind, weights), kind);
}

void mur_update_w(const RealMatrix &v, FactorPair &factors, Divergence kind,
                  const RealMatrix *weights) {
  // W update is the H update of the transposed problem V^T ~ H^T W^T.
  const RealMatrix lambda_t = floored(factors.h.transpose() * factors.w.transpose());
  const RealMatrix weights_t = weights != nullptr ? RealMatrix(weights->transpose()) : RealMatrix();
  RealMatrix wt = factors.w.transpose();
  apply_ratio(wt,
              h_ratio(v.transpose(), factors.h.transpose(), lambda_t, kind,
                      weights != nullptr ? &weights_t : nullptr),
              kind);
  factors.w = wt.transpose();
}

FactorPair mur_step(const RealMatrix &v, const FactorPair &factors, Divergence kind,
                    const RealMatrix *weights) {
  check_shapes(v, factors);
  require(v.allFinite() && all_finite(factors.w) && all_finite(factors.h),
          "mur_step: NaN or Inf in inputs");
  if (weights != nullptr) {
    require(weights->rows() == v.rows() && weights->cols() == v.cols(),
            "mur_step: weight shape mismatch");
  }
  FactorPair next = factors;
  mur_update_w(v, next, kind, weights);
  mur_update_h(v, next, kind, weights);
  return next;
}

FactorPair random_factors(const RealMatrix &v, int components, std::uint64_t seed) {
  require(components >= 1, "component count must be at least 1");
  Rng rng(seed);
  FactorPair f{RealMatrix(v.rows(), components), RealMatrix(components, v.cols())};
  for (Eigen::Index j = 0; j < f.w.cols(); ++j) {
    for (Eigen::Index i = 0; i < f.w.rows(); ++i) {
      f.w(i, j) = rng.uniform_open_closed();
    }
  }
  for (Eigen::Index j = 0; j < f.h.cols(); ++j) {
    for (Eigen::Index i = 0; i < f.h.rows(); ++i) {
      f.h(i, j) = rng.uniform_open_closed();
    }
  }
  const double target = std::max(v.mean(), kEpsilon);
  const double current = (f.w * f.h).mean();
  const double scale = std::sqrt(target / current);
  f.w = (f.w * scale).cwiseMax(kEpsilon);
  f.h = (f.h * scale).cwiseMax(kEpsilon);
  return f;
}

NmfResult refine_nmf(const RealMatrix &v, FactorPair factors, Divergence kind,
                     int iterations, const RealMatrix *weights) {
  require(iterations >= 0, "iteration count must be nonnegative");
  NmfResult result{std::move(factors), {}};
  result.trajectory.reserve(static_cast<std::size_t>(iterations) + 1);
  auto current = [&] {
    return divergence(v, floored(result.factors.product()), kind, weights);
  };
  result.trajectory.push_back(current());
  for (int i = 0; i < iterations; ++i) {
    result.factors = mur_step(v, result.factors, kind, weights);
    result.trajectory.push_back(current());
  }
  return result;
}

NmfResult fit_nmf(const RealMatrix &v, const NmfOptions &options, const RealMatrix *weights) {
  require(options.iterations >= 1, "fit_nmf: iterations must be at least 1");
  require(options.components >= 1, "fit_nmf: component count must be at least 1");
  require(options.components <= std::min(v.rows(), v.cols()),
          "fit_nmf: component count exceeds min(F, T)");
  require((v.array() >= 0.0).all() && v.allFinite(),
          "fit_nmf: data must be finite and nonnegative");
  return refine_nmf(v, random_factors(v, options.components, options.seed), options.kind,
                    options.iterations, weights);
}

} // namespace nmfsep
