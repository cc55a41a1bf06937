#include "nmfsep/hrnmf.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

namespace nmfsep {
namespace {

void check_model(const HrnmfModel &model) {
  const auto k_count = static_cast<std::size_t>(model.components());
  require(model.components() >= 1, "HRNMF needs at least one component");
  require(model.h.rows() == model.components(), "HRNMF factor shapes disagree");
  require(model.ar.size() == k_count, "HRNMF needs AR coefficients for every component");
  for (const auto &per_band : model.ar) {
    require(static_cast<int>(per_band.size()) == model.bins(),
            "HRNMF needs AR coefficients for every band");
    for (const auto &a : per_band) {
      require(a.allFinite(), "HRNMF AR coefficients must be finite");
    }
  }
  require(model.noise_var > 0.0, "HRNMF noise variance must be positive");
  require(all_finite(model.w) && all_finite(model.h), "HRNMF factors contain NaN or Inf");
  require((model.w.array() >= 0.0).all() && (model.h.array() >= 0.0).all(),
          "HRNMF factors must be nonnegative");
}

void check_against(const Spectrogram &mixture, const HrnmfModel &model) {
  check_model(model);
  require(model.bins() == mixture.bins() && model.frames() == mixture.frames(),
          "HRNMF model shape does not match the mixture");
}

// Position of each component's block in the stacked state.
struct StateLayout {
  std::vector<int> offset;
  std::vector<int> length;
  int size = 0;

  explicit StateLayout(const BandModel &band) {
    for (const auto &a : band.ar) {
      offset.push_back(size);
      const int len = std::max<int>(1, static_cast<int>(a.size()));
      length.push_back(len);
      size += len;
    }
  }
};

ComplexMatrix transition(const BandModel &band, const StateLayout &layout) {
  ComplexMatrix a = ComplexMatrix::Zero(layout.size, layout.size);
  for (std::size_t k = 0; k < band.ar.size(); ++k) {
    const int o = layout.offset[k];
    const auto &coeffs = band.ar[k];
    for (Eigen::Index p = 0; p < coeffs.size(); ++p) {
      a(o, o + p) = coeffs(p);
    }
    for (int j = 1; j < layout.length[k]; ++j) {
      a(o + j, o + j - 1) = 1.0;
    }
  }
  return a;
}

// Makes a covariance Hermitian and rejects one with a clearly negative
// diagonal.
void symmetrize(ComplexMatrix &p) {
  p = (0.5 * (p + p.adjoint())).eval();
  double scale = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p(i, i) = p(i, i).real();
    scale = std::max(scale, p(i, i).real());
  }
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (p(i, i).real() < -1e-9 * std::max(scale, 1e-300)) {
      throw NumericalError("Kalman smoother: covariance lost positive semidefiniteness");
    }
  }
}

// Jᴴ = Pp⁻¹ (A P); a generalized inverse when lagged slots are degenerate.
ComplexMatrix solve_gain(const ComplexMatrix &predicted, const ComplexMatrix &rhs) {
  Eigen::LLT<ComplexMatrix> llt(predicted);
  if (llt.info() == Eigen::Success) {
    const ComplexMatrix x = llt.solve(rhs);
    if (x.allFinite()) {
      return x;
    }
  }
  return Eigen::CompleteOrthogonalDecomposition<ComplexMatrix>(predicted).solve(rhs);
}

} // namespace

HrnmfModel HrnmfModel::from_factors(const FactorPair &factors, double noise_var, int order) {
  require(order >= 0, "AR order must be nonnegative");
  HrnmfModel m;
  m.w = factors.w;
  m.h = factors.h;
  m.noise_var = noise_var;
  m.ar.assign(static_cast<std::size_t>(factors.components()),
              std::vector<ComplexVector>(static_cast<std::size_t>(factors.w.rows()),
                                         ComplexVector::Zero(order)));
  check_model(m);
  return m;
}

RealMatrix HrnmfModel::band_variances(int f) const {
  return (w.row(f).transpose().asDiagonal() * h).cwiseMax(kEpsilon);
}

int HrnmfModel::unstable_filters() const {
  int count = 0;
  for (const auto &per_band : ar) {
    for (const auto &a : per_band) {
      const auto p = a.size();
      if (p == 0) {
        continue;
      }
      ComplexMatrix companion = ComplexMatrix::Zero(p, p);
      companion.row(0) = a.transpose();
      for (Eigen::Index j = 1; j < p; ++j) {
        companion(j, j - 1) = 1.0;
      }
      const Eigen::ComplexEigenSolver<ComplexMatrix> eig(companion, false);
      if (eig.eigenvalues().cwiseAbs().maxCoeff() >= 1.0) {
        ++count;
      }
    }
  }
  return count;
}

BandModel band_model(const HrnmfModel &model, int f) {
  BandModel band;
  for (const auto &per_band : model.ar) {
    band.ar.push_back(per_band[static_cast<std::size_t>(f)]);
  }
  band.variances = model.band_variances(f);
  band.noise_var = model.noise_var;
  return band;
}

BandPosterior kalman_smooth_band(const ComplexVector &x, const BandModel &model) {
  const auto frames = x.size();
  const auto k_count = static_cast<Eigen::Index>(model.ar.size());
  require(frames >= 1, "kalman_smooth_band: need at least one frame");
  require(k_count >= 1 && model.variances.rows() == k_count && model.variances.cols() == frames,
          "kalman_smooth_band: variance shape mismatch");
  require(model.noise_var > 0.0, "kalman_smooth_band: noise variance must be positive");
  require(x.allFinite() && model.variances.allFinite(), "kalman_smooth_band: non-finite input");

  const StateLayout layout(model);
  const int s = layout.size;
  const ComplexMatrix a = transition(model, layout);
  const auto ts = static_cast<std::size_t>(frames);

  std::vector<ComplexVector> pred_mean(ts), filt_mean(ts);
  std::vector<ComplexMatrix> pred_cov(ts), filt_cov(ts);
  double loglik = 0.0;

  for (Eigen::Index t = 0; t < frames; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    ComplexVector mp;
    ComplexMatrix pp;
    if (t == 0) {
      mp = ComplexVector::Zero(s);
      pp = ComplexMatrix::Zero(s, s);
    } else {
      mp = a * filt_mean[ti - 1];
      pp = a * filt_cov[ti - 1] * a.adjoint();
    }
    for (Eigen::Index k = 0; k < k_count; ++k) {
      const int o = layout.offset[static_cast<std::size_t>(k)];
      pp(o, o) += model.variances(k, t);
    }
    symmetrize(pp);

    // Observation row c picks the current slot of every component.
    Complex predicted_obs{};
    ComplexVector pc = ComplexVector::Zero(s);
    for (Eigen::Index k = 0; k < k_count; ++k) {
      const int o = layout.offset[static_cast<std::size_t>(k)];
      predicted_obs += mp(o);
      pc += pp.col(o);
    }
    double innov_var = model.noise_var;
    for (Eigen::Index k = 0; k < k_count; ++k) {
      innov_var += pc(layout.offset[static_cast<std::size_t>(k)]).real();
    }
    const Complex innov = x(t) - predicted_obs;
    const ComplexVector gain = pc / innov_var;

    filt_mean[ti] = mp + gain * innov;
    ComplexMatrix pf = pp - innov_var * gain * gain.adjoint();
    symmetrize(pf);
    filt_cov[ti] = std::move(pf);
    pred_mean[ti] = std::move(mp);
    pred_cov[ti] = std::move(pp);
    loglik += -std::log(std::numbers::pi * innov_var) - std::norm(innov) / innov_var;
  }

  BandPosterior post;
  post.loglik = loglik;
  post.state_mean.resize(ts);
  post.state_cov.resize(ts);
  post.state_cross.assign(ts, ComplexMatrix::Zero(s, s));
  post.state_mean[ts - 1] = filt_mean[ts - 1];
  post.state_cov[ts - 1] = filt_cov[ts - 1];
  for (Eigen::Index t = frames - 2; t >= 0; --t) {
    const auto ti = static_cast<std::size_t>(t);
    const ComplexMatrix jt = solve_gain(pred_cov[ti + 1], a * filt_cov[ti]).adjoint();
    post.state_mean[ti] = filt_mean[ti] + jt * (post.state_mean[ti + 1] - pred_mean[ti + 1]);
    ComplexMatrix ps = filt_cov[ti] + jt * (post.state_cov[ti + 1] - pred_cov[ti + 1]) * jt.adjoint();
    symmetrize(ps);
    post.state_cov[ti] = std::move(ps);
    post.state_cross[ti + 1] = post.state_cov[ti + 1] * jt.adjoint();
  }

  post.means.resize(k_count, frames);
  post.second_moments.resize(k_count, frames);
  post.lag1 = ComplexMatrix::Zero(k_count, frames);
  post.residual_power.resize(frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    const auto &m = post.state_mean[ti];
    const auto &p = post.state_cov[ti];
    Complex sum_mean{};
    double sum_var = 0.0;
    for (Eigen::Index k = 0; k < k_count; ++k) {
      const int o = layout.offset[static_cast<std::size_t>(k)];
      post.means(k, t) = m(o);
      post.second_moments(k, t) = std::norm(m(o)) + std::max(p(o, o).real(), 0.0);
      if (t > 0) {
        post.lag1(k, t) = post.state_cross[ti](o, o) + m(o) * std::conj(post.state_mean[ti - 1](o));
      }
      sum_mean += m(o);
      for (Eigen::Index l = 0; l < k_count; ++l) {
        sum_var += p(o, layout.offset[static_cast<std::size_t>(l)]).real();
      }
    }
    post.residual_power(t) = std::norm(x(t) - sum_mean) + std::max(sum_var, 0.0);
  }
  return post;
}

HrnmfPosterior hrnmf_e_step(const Spectrogram &mixture, const HrnmfModel &model,
                            ExecPolicy policy) {
  check_against(mixture, model);
  const int bins = model.bins();
  HrnmfPosterior out;
  out.bands.resize(static_cast<std::size_t>(bins));
  const auto body = [&](int f) {
    out.bands[static_cast<std::size_t>(f)] =
        kalman_smooth_band(mixture.data().row(f).transpose(), band_model(model, f));
  };
  if (policy == ExecPolicy::parallel) {
    // Exceptions may not cross the OpenMP region; rethrow afterwards.
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (int f = 0; f < bins; ++f) {
      try {
        body(f);
      } catch (...) {
#pragma omp critical(nmfsep_hrnmf_failure)
        if (!failure) {
          failure = std::current_exception();
        }
      }
    }
    if (failure) {
      std::rethrow_exception(failure);
    }
  } else {
    for (int f = 0; f < bins; ++f) {
      body(f);
    }
  }
  // Reduction in band order keeps the total independent of scheduling.
  for (const auto &b : out.bands) {
    out.loglik += b.loglik;
  }
  return out;
}

namespace {

// E[r_t r_tᴴ] and E[X(t) conj r_t] for component k, where r_t holds the P
// lagged values X(t-1) .. X(t-P), i.e. the first P slots of s_{t-1}.
void lagged_moments(const BandPosterior &post, int offset, Eigen::Index order, std::size_t t,
                    ComplexMatrix &rr, ComplexVector &xr) {
  const auto &m_prev = post.state_mean[t - 1].segment(offset, order);
  rr = post.state_cov[t - 1].block(offset, offset, order, order) + m_prev * m_prev.adjoint();
  xr = (post.state_cross[t].block(offset, offset, 1, order) +
        post.state_mean[t](offset) * m_prev.adjoint())
           .transpose();
}

// Offsets of each component in the band's stacked state.
std::vector<int> band_offsets(const HrnmfModel &model, int f) {
  std::vector<int> offsets;
  int pos = 0;
  for (int k = 0; k < model.components(); ++k) {
    offsets.push_back(pos);
    pos += std::max(1, model.order(k, f));
  }
  return offsets;
}

void check_posterior(const HrnmfModel &model, const HrnmfPosterior &posterior) {
  require(static_cast<int>(posterior.bands.size()) == model.bins(),
          "posterior does not cover every band of the model");
  for (const auto &b : posterior.bands) {
    require(b.means.rows() == model.components() && b.means.cols() == model.frames(),
            "posterior shape does not match the model");
  }
}

} // namespace

std::vector<RealMatrix> innovation_powers(const HrnmfModel &model,
                                          const HrnmfPosterior &posterior) {
  check_model(model);
  check_posterior(model, posterior);
  const int k_count = model.components();
  const int frames = model.frames();
  std::vector<RealMatrix> q(static_cast<std::size_t>(k_count),
                            RealMatrix(model.bins(), frames));
  for (int f = 0; f < model.bins(); ++f) {
    const auto &post = posterior.bands[static_cast<std::size_t>(f)];
    const auto offsets = band_offsets(model, f);
    for (int k = 0; k < k_count; ++k) {
      const auto &a = model.ar[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)];
      auto &qk = q[static_cast<std::size_t>(k)];
      for (int t = 0; t < frames; ++t) {
        double value = post.second_moments(k, t);
        if (t > 0 && a.size() > 0) {
          ComplexMatrix rr;
          ComplexVector xr;
          lagged_moments(post, offsets[static_cast<std::size_t>(k)], a.size(),
                         static_cast<std::size_t>(t), rr, xr);
          // E|X - aᵀr|² = E|X|² - 2 Re(aᴴ E[X conj r]) + aᵀ E[r rᴴ] conj(a)
          value += -2.0 * a.dot(xr).real() + (a.transpose() * rr * a.conjugate())(0, 0).real();
        }
        qk(f, t) = std::max(value, 0.0);
      }
    }
  }
  return q;
}

HrnmfModel hrnmf_m_step(const HrnmfModel &model, const HrnmfPosterior &posterior,
                        const EmOptions &options) {
  check_model(model);
  check_posterior(model, posterior);
  HrnmfModel next = model;
  const int k_count = model.components();
  const int frames = model.frames();

  if (!options.freeze_ar) {
    for (int f = 0; f < model.bins(); ++f) {
      const auto &post = posterior.bands[static_cast<std::size_t>(f)];
      const auto offsets = band_offsets(model, f);
      const RealMatrix v = model.band_variances(f);
      for (int k = 0; k < k_count; ++k) {
        auto &a = next.ar[static_cast<std::size_t>(k)][static_cast<std::size_t>(f)];
        const auto order = a.size();
        if (order == 0) {
          continue;
        }
        // Normal equations: sum_p a_p M_pq = b_q with V-weighted moments.
        ComplexMatrix m = ComplexMatrix::Zero(order, order);
        ComplexVector b = ComplexVector::Zero(order);
        for (int t = 1; t < frames; ++t) {
          ComplexMatrix rr;
          ComplexVector xr;
          lagged_moments(post, offsets[static_cast<std::size_t>(k)], order,
                         static_cast<std::size_t>(t), rr, xr);
          m += rr / v(k, t);
          b += xr / v(k, t);
        }
        if (m.cwiseAbs().maxCoeff() <= 0.0) {
          continue;
        }
        const ComplexMatrix mt = m.transpose();
        Eigen::LDLT<ComplexMatrix> ldlt(mt);
        ComplexVector solved = ldlt.solve(b);
        if (ldlt.info() != Eigen::Success || !solved.allFinite()) {
          solved = Eigen::CompleteOrthogonalDecomposition<ComplexMatrix>(mt).solve(b);
        }
        if (solved.allFinite()) {
          a = solved;
        }
      }
    }
  }

  if (options.update_w || options.update_h) {
    const auto q = innovation_powers(next, posterior);
    for (int k = 0; k < k_count; ++k) {
      // Each V_k = W_k H_k is its own rank-one IS fit to Q_k.
      FactorPair f{next.w.col(k), next.h.row(k)};
      const auto &qk = q[static_cast<std::size_t>(k)];
      if (options.update_w) {
        mur_update_w(qk, f, Divergence::is);
      }
      if (options.update_h) {
        mur_update_h(qk, f, Divergence::is);
      }
      next.w.col(k) = f.w;
      next.h.row(k) = f.h;
    }
  }

  if (options.update_noise) {
    double total = 0.0;
    for (const auto &b : posterior.bands) {
      total += b.residual_power.sum();
    }
    next.noise_var =
        std::max(total / (static_cast<double>(model.bins()) * frames), 1e-12);
  }

  if (!all_finite(next.w) || !all_finite(next.h) || !std::isfinite(next.noise_var)) {
    throw NumericalError("HRNMF M-step produced NaN");
  }
  return next;
}

HrnmfModel em_step(const Spectrogram &mixture, const HrnmfModel &model,
                   const EmOptions &options, double *loglik, ExecPolicy policy) {
  const auto posterior = hrnmf_e_step(mixture, model, policy);
  if (loglik != nullptr) {
    *loglik = posterior.loglik;
  }
  return hrnmf_m_step(model, posterior, options);
}

FactorPair hrnmf_initial_factors(const Spectrogram &mixture, const HrnmfOptions &options) {
  require(options.components >= 1, "fit_hrnmf: component count must be at least 1");
  const RealMatrix magnitude = mixture.magnitude();
  const RealMatrix power = magnitude.cwiseAbs2();
  switch (options.init) {
  case HrnmfInit::random:
    return random_factors(power, options.components, options.seed);
  case HrnmfInit::is_nmf: {
    NmfOptions nmf{options.components, Divergence::is, options.init_iterations, options.seed};
    return fit_nmf(power, nmf).factors;
  }
  case HrnmfInit::kl_nmf: {
    NmfOptions nmf{options.components, Divergence::kl, options.init_iterations, options.seed};
    auto f = fit_nmf(magnitude, nmf).factors;
    // Amplitude factors to variance factors.
    f.w = f.w.cwiseAbs2().cwiseMax(kEpsilon);
    f.h = f.h.cwiseAbs2().cwiseMax(kEpsilon);
    return f;
  }
  }
  throw InvalidArgument("unknown HRNMF initialization");
}

HrnmfResult refine_hrnmf(const Spectrogram &mixture, HrnmfModel model, int iterations,
                         const EmOptions &options, ExecPolicy policy) {
  require(iterations >= 0, "refine_hrnmf: iterations must be nonnegative");
  HrnmfResult result{std::move(model), {}};
  for (int i = 0; i < iterations; ++i) {
    double ll = 0.0;
    result.model = em_step(mixture, result.model, options, &ll, policy);
    result.loglik.push_back(ll);
  }
  result.loglik.push_back(hrnmf_e_step(mixture, result.model, policy).loglik);
  return result;
}

HrnmfResult fit_hrnmf(const Spectrogram &mixture, const FactorPair &init,
                      const HrnmfOptions &options) {
  require(options.iterations >= 1, "fit_hrnmf: iterations must be at least 1");
  require(options.noise_fraction > 0.0, "fit_hrnmf: noise fraction must be positive");
  const double power = mixture.data().cwiseAbs2().mean();
  const double noise = std::max(options.noise_fraction * power, 1e-12);
  return refine_hrnmf(mixture, HrnmfModel::from_factors(init, noise, options.order),
                      options.iterations, options.em);
}

HrnmfResult fit_hrnmf(const Spectrogram &mixture, const HrnmfOptions &options) {
  return fit_hrnmf(mixture, hrnmf_initial_factors(mixture, options), options);
}

SourceEstimateSet hrnmf_separate(const Spectrogram &mixture, const HrnmfModel &model,
                                 const Grouping &grouping, ExecPolicy policy) {
  check_against(mixture, model);
  require(static_cast<int>(grouping.size()) == model.components(),
          "grouping must assign every HRNMF component to a source");
  int sources = 0;
  for (int g : grouping) {
    require(g >= 0, "grouping entries must be nonnegative");
    sources = std::max(sources, g + 1);
  }
  const auto posterior = hrnmf_e_step(mixture, model, policy);
  std::vector<ComplexMatrix> parts(static_cast<std::size_t>(sources),
                                   ComplexMatrix::Zero(mixture.bins(), mixture.frames()));
  for (int f = 0; f < model.bins(); ++f) {
    const auto &means = posterior.bands[static_cast<std::size_t>(f)].means;
    for (int k = 0; k < model.components(); ++k) {
      parts[static_cast<std::size_t>(grouping[static_cast<std::size_t>(k)])].row(f) += means.row(k);
    }
  }
  std::vector<Spectrogram> specs;
  for (auto &p : parts) {
    specs.push_back(mixture.with_data(std::move(p)));
  }
  return SourceEstimateSet::from_spectrograms(mixture, std::move(specs), policy);
}

HrnmfModel stack_models(const std::vector<HrnmfModel> &models, double noise_var) {
  require(!models.empty(), "stack_models: no models given");
  int total = 0;
  for (const auto &m : models) {
    check_model(m);
    require(m.bins() == models.front().bins() && m.frames() == models.front().frames(),
            "stack_models: models disagree in shape");
    total += m.components();
  }
  HrnmfModel out;
  out.w.resize(models.front().bins(), total);
  out.h.resize(total, models.front().frames());
  out.noise_var = noise_var;
  int col = 0;
  for (const auto &m : models) {
    out.w.middleCols(col, m.components()) = m.w;
    out.h.middleRows(col, m.components()) = m.h;
    out.ar.insert(out.ar.end(), m.ar.begin(), m.ar.end());
    col += m.components();
  }
  check_model(out);
  return out;
}

} // namespace nmfsep
