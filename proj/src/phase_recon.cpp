#include "nmfsep/phase_recon.hpp"

#include <cmath>
#include <optional>

namespace nmfsep {

SourceEstimateSet SourceEstimateSet::from_spectrograms(const Spectrogram &mixture,
                                                       std::vector<Spectrogram> spectrograms,
                                                       ExecPolicy policy) {
  SourceEstimateSet set{std::move(spectrograms), {}, mixture};
  set.signals.reserve(set.spectrograms.size());
  for (const auto &s : set.spectrograms) {
    require(s.bins() == mixture.bins() && s.frames() == mixture.frames(),
            "source spectrogram does not match the mixture dimensions");
    set.signals.push_back(istft(s, policy));
  }
  return set;
}

Grouping one_component_per_source(int components) {
  Grouping g(static_cast<std::size_t>(components));
  for (int k = 0; k < components; ++k) {
    g[static_cast<std::size_t>(k)] = k;
  }
  return g;
}

std::vector<RealMatrix> grouped_components(const FactorPair &factors, const Grouping &grouping) {
  require(static_cast<int>(grouping.size()) == factors.components(),
          "grouping must assign every NMF component to a source");
  int sources = 0;
  for (int g : grouping) {
    require(g >= 0, "grouping entries must be nonnegative");
    sources = std::max(sources, g + 1);
  }
  std::vector<RealMatrix> models(static_cast<std::size_t>(sources),
                                 RealMatrix::Zero(factors.w.rows(), factors.h.cols()));
  std::vector<bool> used(static_cast<std::size_t>(sources), false);
  for (int j = 0; j < factors.components(); ++j) {
    const auto s = static_cast<std::size_t>(grouping[static_cast<std::size_t>(j)]);
    models[s] += factors.component(j);
    used[s] = true;
  }
  for (bool u : used) {
    require(u, "grouping leaves a source without components");
  }
  return models;
}

SourceEstimateSet wiener_separate(const Spectrogram &mixture,
                                  const std::vector<RealMatrix> &source_models) {
  require(!source_models.empty(), "wiener_separate: no source models");
  RealMatrix total = RealMatrix::Zero(mixture.bins(), mixture.frames());
  for (const auto &v : source_models) {
    require(v.rows() == mixture.bins() && v.cols() == mixture.frames(),
            "wiener_separate: model shape does not match the mixture");
    require((v.array() >= 0.0).all() && v.allFinite(),
            "wiener_separate: models must be finite and nonnegative");
    total += v;
  }
  total = total.cwiseMax(kEpsilon);
  std::vector<Spectrogram> parts;
  parts.reserve(source_models.size());
  for (const auto &v : source_models) {
    const RealMatrix mask = v.cwiseQuotient(total);
    parts.push_back(mixture.with_data(mixture.data().cwiseProduct(mask.cast<Complex>())));
  }
  return SourceEstimateSet::from_spectrograms(mixture, std::move(parts));
}

SourceEstimateSet wiener_separate(const Spectrogram &mixture, const FactorPair &factors,
                                  const Grouping &grouping) {
  return wiener_separate(mixture, grouped_components(factors, grouping));
}

SourceEstimateSet init_from_wiener(const Spectrogram &mixture, const FactorPair &factors,
                                   const Grouping &grouping) {
  return wiener_separate(mixture, factors, grouping);
}

namespace {

// V * unit phasor of `direction`, falling back to `previous` where the
// direction vanishes.
ComplexMatrix impose_magnitude(const RealMatrix &magnitude, const ComplexMatrix &direction,
                               const ComplexMatrix &previous) {
  ComplexMatrix out(magnitude.rows(), magnitude.cols());
  for (Eigen::Index j = 0; j < magnitude.cols(); ++j) {
    for (Eigen::Index i = 0; i < magnitude.rows(); ++i) {
      Complex d = direction(i, j);
      double r = std::abs(d);
      if (r == 0.0) {
        d = previous(i, j);
        r = std::abs(d);
      }
      out(i, j) = r == 0.0 ? Complex(magnitude(i, j), 0.0) : magnitude(i, j) * (d / r);
    }
  }
  return out;
}

template <typename Update>
PhaseReconResult iterate_fixed_magnitude(const RealMatrix &magnitude, const Spectrogram &init,
                                         int iterations, Update &&update) {
  require(iterations >= 0, "phase reconstruction: iterations must be nonnegative");
  require(magnitude.rows() == init.bins() && magnitude.cols() == init.frames(),
          "phase reconstruction: magnitude and init dimensions differ");
  require((magnitude.array() >= 0.0).all() && magnitude.allFinite(),
          "phase reconstruction: magnitude must be finite and nonnegative");

  PhaseReconResult result{init, {}, {}};
  // X^0 carries the target magnitude with the phase of init.
  ComplexMatrix x = impose_magnitude(magnitude, init.data(), init.data());
  for (int i = 0;; ++i) {
    const Spectrogram current = init.with_data(x);
    const Spectrogram projected = consistency_project(current);
    result.magnitude_distance.push_back(
        std::sqrt(weighted_squared_norm(RealMatrix(magnitude - projected.magnitude()))));
    result.inconsistency.push_back(
        weighted_squared_norm(ComplexMatrix(x - projected.data())));
    if (i == iterations) {
      break;
    }
    x = impose_magnitude(magnitude, update(current, projected), x);
  }
  result.estimate = init.with_data(std::move(x));
  return result;
}

} // namespace

PhaseReconResult griffin_lim_separate(const RealMatrix &magnitude, const Spectrogram &init,
                                      int iterations) {
  return iterate_fixed_magnitude(
      magnitude, init, iterations,
      [](const Spectrogram &, const Spectrogram &projected) { return projected.data(); });
}

PhaseReconResult leroux_separate(const RealMatrix &magnitude, const Spectrogram &init,
                                 int iterations, const LerouxKernel &kernel) {
  require(kernel.plan == init.plan(), "leroux_separate: kernel/plan mismatch");
  return iterate_fixed_magnitude(magnitude, init, iterations,
                                 [&kernel](const Spectrogram &current, const Spectrogram &) {
                                   return apply_leroux_kernel(kernel, current).data();
                                 });
}

SourceEstimateSet phase_reconstruct_sources(const Spectrogram &mixture,
                                            const std::vector<RealMatrix> &source_models,
                                            const PhaseReconOptions &options) {
  const SourceEstimateSet wiener = wiener_separate(mixture, source_models);
  std::optional<LerouxKernel> kernel;
  if (options.algorithm == PhaseAlgorithm::leroux) {
    const auto tr = options.truncation.bins == 0 ? KernelTruncation::default_for(mixture.plan())
                                                 : options.truncation;
    kernel = leroux_kernel(mixture.plan(), tr);
  }

  const auto count = static_cast<int>(source_models.size());
  std::vector<std::optional<Spectrogram>> outputs(source_models.size());
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < count; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    RealMatrix target;
    Spectrogram init = wiener.spectrograms[ks];
    if (options.init == PhaseInit::wiener_magnitude) {
      target = init.magnitude();
    } else {
      target = source_models[ks];
      init = mixture;
    }
    auto r = options.algorithm == PhaseAlgorithm::griffin_lim
                 ? griffin_lim_separate(target, init, options.iterations)
                 : leroux_separate(target, init, options.iterations, *kernel);
    outputs[ks] = std::move(r.estimate);
  }
  std::vector<Spectrogram> parts;
  parts.reserve(outputs.size());
  for (auto &o : outputs) {
    parts.push_back(std::move(*o));
  }
  return SourceEstimateSet::from_spectrograms(mixture, std::move(parts));
}

} // namespace nmfsep
