#include "nmfsep/cnmf.hpp"

#include "nmfsep/factorization.hpp"

#include <cmath>

namespace nmfsep {
namespace {

void check_model(const Spectrogram &mixture, const CnmfModel &model) {
  require(model.components() >= 1, "CNMF needs at least one component");
  require(model.w.rows() == mixture.bins() && model.h.cols() == mixture.frames() &&
              model.h.rows() == model.components() &&
              static_cast<int>(model.phases.size()) == model.components(),
          "CNMF model shape does not match the mixture");
  for (const auto &p : model.phases) {
    require(p.rows() == mixture.bins() && p.cols() == mixture.frames(),
            "CNMF phase field shape does not match the mixture");
  }
  require(model.gamma >= 0.0, "CNMF gamma must be nonnegative");
}

ComplexMatrix unit_phasors(const ComplexMatrix &m, const ComplexMatrix &fallback) {
  ComplexMatrix out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double r = std::abs(m(i, j));
      out(i, j) = r > 0.0 ? m(i, j) / r : fallback(i, j);
    }
  }
  return out;
}

} // namespace

ComplexMatrix CnmfModel::component(int k) const {
  const RealMatrix v = w.col(k) * h.row(k);
  return phases[static_cast<std::size_t>(k)].cwiseProduct(v.cast<Complex>());
}

ComplexMatrix CnmfModel::prediction() const {
  ComplexMatrix acc = ComplexMatrix::Zero(w.rows(), h.cols());
  for (int k = 0; k < components(); ++k) {
    acc += component(k);
  }
  return acc;
}

double cnmf_objective(const Spectrogram &mixture, const CnmfModel &model, double sparsity) {
  check_model(mixture, model);
  double value = (mixture.data() - model.prediction()).squaredNorm() + sparsity * model.h.sum();
  if (model.gamma > 0.0) {
    for (int k = 0; k < model.components(); ++k) {
      value += model.gamma * inconsistency(mixture.with_data(model.component(k)));
    }
  }
  return value;
}

namespace {

// beta_k = V_k / sum_l V_l with V_k floored at epsilon.
std::vector<RealMatrix> share_weights(const CnmfModel &model) {
  const auto k_count = static_cast<std::size_t>(model.components());
  std::vector<RealMatrix> v(k_count);
  RealMatrix total = RealMatrix::Zero(model.w.rows(), model.h.cols());
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    v[k] = (model.w.col(kk) * model.h.row(kk)).cwiseMax(kEpsilon);
    total += v[k];
  }
  for (auto &m : v) {
    m = m.cwiseQuotient(total);
  }
  return v;
}

} // namespace

std::vector<ComplexMatrix> cnmf_residual_shares(const Spectrogram &mixture,
                                                const CnmfModel &model) {
  check_model(mixture, model);
  const auto beta = share_weights(model);
  const ComplexMatrix residual = mixture.data() - model.prediction();
  std::vector<ComplexMatrix> shares;
  for (int k = 0; k < model.components(); ++k) {
    shares.push_back(model.component(k) +
                     residual.cwiseProduct(beta[static_cast<std::size_t>(k)].cast<Complex>()));
  }
  return shares;
}

CnmfModel cnmf_step(const Spectrogram &mixture, const CnmfModel &model,
                    const CnmfStepOptions &options) {
  check_model(mixture, model);
  require(all_finite(model.w) && all_finite(model.h), "cnmf_step: NaN in factors");
  const int k_count = model.components();
  const auto betas = share_weights(model);
  const ComplexMatrix residual = mixture.data() - model.prediction();

  CnmfModel next = model;
  std::vector<RealMatrix> targets(static_cast<std::size_t>(k_count));
  std::vector<RealMatrix> inv_beta(static_cast<std::size_t>(k_count));

  // Components are independent once the residual is shared out.
#pragma omp parallel for schedule(static)
  for (int k = 0; k < k_count; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const RealMatrix &beta = betas[ks];
    const ComplexMatrix current = model.component(k);
    const ComplexMatrix share = current + residual.cwiseProduct(beta.cast<Complex>());
    ComplexMatrix direction = share;
    if (model.gamma > 0.0) {
      direction += model.gamma * consistency_project(mixture.with_data(current)).data();
    }
    next.phases[ks] = unit_phasors(direction, model.phases[ks]);
    // Magnitude target: projection of the share on the new phase.
    targets[ks] = (next.phases[ks].conjugate().cwiseProduct(share)).real().cwiseMax(0.0);
    inv_beta[ks] = beta.cwiseInverse();
  }
  if (!options.update_factors) {
    return next;
  }

  for (int k = 0; k < k_count; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const RealMatrix &a = targets[ks];
    const RealMatrix &omega = inv_beta[ks];
    // W_k given H_k: w_f = sum_t omega a h / sum_t omega h^2.
    const RealVector h = next.h.row(k).transpose();
    const RealVector num_w = omega.cwiseProduct(a) * h;
    const RealVector den_w = omega * h.cwiseAbs2();
    next.w.col(k) = num_w.cwiseQuotient(den_w.cwiseMax(kEpsilon)).cwiseMax(kEpsilon);
    // H_k given W_k, with the optional L1 shrinkage.
    const RealVector w = next.w.col(k);
    const RealVector num_h = (omega.cwiseProduct(a)).transpose() * w;
    const RealVector den_h = omega.transpose() * w.cwiseAbs2();
    const RealVector shrunk = (num_h.array() - 0.5 * options.sparsity).matrix();
    next.h.row(k) = shrunk.cwiseQuotient(den_h.cwiseMax(kEpsilon)).cwiseMax(kEpsilon).transpose();
  }
  require(all_finite(next.w) && all_finite(next.h), "cnmf_step: update produced NaN");
  return next;
}

CnmfResult refine_cnmf(const Spectrogram &mixture, CnmfModel model, int iterations,
                       const CnmfStepOptions &options) {
  require(iterations >= 0, "refine_cnmf: iterations must be nonnegative");
  CnmfResult result{std::move(model), {}};
  result.trajectory.push_back(cnmf_objective(mixture, result.model, options.sparsity));
  for (int i = 0; i < iterations; ++i) {
    result.model = cnmf_step(mixture, result.model, options);
    result.trajectory.push_back(cnmf_objective(mixture, result.model, options.sparsity));
  }
  return result;
}

CnmfResult fit_cnmf(const Spectrogram &mixture, const CnmfOptions &options) {
  require(options.components >= 1, "fit_cnmf: component count must be at least 1");
  require(options.iterations >= 1, "fit_cnmf: iterations must be at least 1");
  const RealMatrix magnitude = mixture.magnitude();
  const FactorPair init = random_factors(magnitude, options.components, options.seed);
  const ComplexMatrix phase =
      unit_phasors(mixture.data(), ComplexMatrix::Ones(mixture.bins(), mixture.frames()));
  CnmfModel model{init.w, init.h,
                  std::vector<ComplexMatrix>(static_cast<std::size_t>(options.components), phase),
                  options.gamma};
  return refine_cnmf(mixture, std::move(model), options.iterations, options.step);
}

SourceEstimateSet cnmf_separate(const Spectrogram &mixture, const CnmfModel &model,
                                const Grouping &grouping) {
  check_model(mixture, model);
  require(static_cast<int>(grouping.size()) == model.components(),
          "grouping must assign every CNMF component to a source");
  int sources = 0;
  for (int g : grouping) {
    require(g >= 0, "grouping entries must be nonnegative");
    sources = std::max(sources, g + 1);
  }
  std::vector<ComplexMatrix> parts(static_cast<std::size_t>(sources),
                                   ComplexMatrix::Zero(mixture.bins(), mixture.frames()));
  for (int k = 0; k < model.components(); ++k) {
    parts[static_cast<std::size_t>(grouping[static_cast<std::size_t>(k)])] += model.component(k);
  }
  std::vector<Spectrogram> specs;
  for (auto &p : parts) {
    specs.push_back(mixture.with_data(std::move(p)));
  }
  return SourceEstimateSet::from_spectrograms(mixture, std::move(specs));
}

} // namespace nmfsep
