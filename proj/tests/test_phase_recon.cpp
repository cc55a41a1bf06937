#include "nmfsep/bss_eval.hpp"
#include "nmfsep/phase_recon.hpp"
#include "nmfsep/random.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace nmfsep;

namespace {

Signal white_noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Signal x(n);
  for (auto &v : x) {
    v = rng.normal();
  }
  return x;
}

RealMatrix random_positive(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  RealMatrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) {
      m(i, j) = rng.uniform_open_closed();
    }
  }
  return m;
}

Spectrogram random_phase_spec(const RealMatrix &mag, const StftPlan &plan, std::size_t len,
                              std::uint64_t seed) {
  Rng rng(seed);
  ComplexMatrix m(mag.rows(), mag.cols());
  for (int j = 0; j < mag.cols(); ++j) {
    for (int i = 0; i < mag.rows(); ++i) {
      m(i, j) = std::polar(mag(i, j), rng.uniform(0.0, 2.0 * std::numbers::pi));
    }
  }
  return Spectrogram(m, plan, len);
}

} // namespace

TEST_CASE("wiener: single source recovers the mixture exactly") {
  const auto plan = StftPlan::hann(64, 8000.0);
  const auto mix = stft(white_noise(500, 1), plan);
  FactorPair f{random_positive(mix.bins(), 3, 2), random_positive(3, mix.frames(), 3)};
  const auto set = wiener_separate(mix, f, Grouping{0, 0, 0});
  REQUIRE(set.sources() == 1);
  CHECK((set.spectrograms[0].data() - mix.data()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("wiener: identical models split the mixture in half") {
  const auto plan = StftPlan::hann(64, 8000.0);
  const auto mix = stft(white_noise(500, 4), plan);
  const auto v = random_positive(mix.bins(), mix.frames(), 5);
  const auto set = wiener_separate(mix, std::vector<RealMatrix>{v, v});
  for (const auto &s : set.spectrograms) {
    CHECK((s.data() - 0.5 * mix.data()).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("wiener: masks partition the mixture") {
  const auto plan = StftPlan::hann(128, 8000.0);
  const auto mix = stft(white_noise(2000, 6), plan);
  FactorPair f{random_positive(mix.bins(), 4, 7), random_positive(4, mix.frames(), 8)};
  const auto set = wiener_separate(mix, f, Grouping{0, 1, 2, 1});
  REQUIRE(set.sources() == 3);
  ComplexMatrix sum = ComplexMatrix::Zero(mix.bins(), mix.frames());
  for (const auto &s : set.spectrograms) {
    sum += s.data();
  }
  CHECK((sum - mix.data()).cwiseAbs().maxCoeff() <= 1e-12 * mix.data().cwiseAbs().maxCoeff());
  // Signals stay synchronized with their spectrograms.
  for (int k = 0; k < set.sources(); ++k) {
    const auto resynth = istft(set.spectrograms[static_cast<std::size_t>(k)]);
    for (std::size_t i = 0; i < resynth.size(); ++i) {
      CHECK(resynth[i] == set.signals[static_cast<std::size_t>(k)][i]);
    }
  }
}

TEST_CASE("wiener: grouping errors") {
  const auto plan = StftPlan::hann(64, 8000.0);
  const auto mix = stft(white_noise(300, 1), plan);
  FactorPair f{random_positive(mix.bins(), 3, 2), random_positive(3, mix.frames(), 3)};
  CHECK_THROWS_AS(wiener_separate(mix, f, Grouping{0, 1}), InvalidArgument);
  CHECK_THROWS_AS(wiener_separate(mix, f, Grouping{0, 2, 2}), InvalidArgument);
  CHECK_THROWS_AS(wiener_separate(mix, f, Grouping{0, -1, 1}), InvalidArgument);
}

TEST_CASE("init_from_wiener delegates to wiener_separate") {
  const auto plan = StftPlan::hann(64, 8000.0);
  const auto mix = stft(white_noise(300, 9), plan);
  FactorPair f{random_positive(mix.bins(), 2, 2), random_positive(2, mix.frames(), 3)};
  const auto a = init_from_wiener(mix, f, one_component_per_source(2));
  const auto b = wiener_separate(mix, f, one_component_per_source(2));
  for (int k = 0; k < 2; ++k) {
    CHECK(a.spectrograms[static_cast<std::size_t>(k)].data() ==
          b.spectrograms[static_cast<std::size_t>(k)].data());
  }
}

TEST_CASE("griffin-lim: consistent init with matching magnitude is a fixed point") {
  const auto plan = StftPlan::hann(128, 8000.0);
  const auto spec = stft(white_noise(1500, 10), plan);
  const auto r = griffin_lim_separate(spec.magnitude(), spec, 5);
  CHECK((r.estimate.data() - spec.data()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("griffin-lim: magnitude distance is non-increasing and magnitude is preserved") {
  const auto plan = StftPlan::hann(128, 8000.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::size_t len = 1200;
    const auto mag = random_positive(plan.num_bins(), plan.num_frames(len), seed);
    const auto init = random_phase_spec(mag, plan, len, seed + 50);
    const auto r = griffin_lim_separate(mag, init, 50);
    REQUIRE(r.magnitude_distance.size() == 51);
    for (std::size_t i = 1; i < r.magnitude_distance.size(); ++i) {
      CHECK(r.magnitude_distance[i] <= r.magnitude_distance[i - 1] + 1e-10);
      CHECK(r.inconsistency[i] <= r.inconsistency[i - 1] * (1.0 + 1e-12) + 1e-10);
    }
    CHECK(r.magnitude_distance.back() < r.magnitude_distance.front());
    CHECK((r.estimate.magnitude() - mag).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("griffin-lim: defaults and zero iterations") {
  CHECK(PhaseReconOptions{}.iterations == 50);
  CHECK(PhaseReconOptions{}.init == PhaseInit::wiener_magnitude);
  const auto plan = StftPlan::hann(64, 8000.0);
  const auto mag = random_positive(33, plan.num_frames(200), 3);
  const auto init = random_phase_spec(mag, plan, 200, 4);
  const auto r = griffin_lim_separate(mag, init, 0);
  CHECK((r.estimate.data() - init.data()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS_AS(griffin_lim_separate(mag, init, -1), InvalidArgument);
  CHECK_THROWS_AS(griffin_lim_separate(RealMatrix::Ones(3, 3), init, 1), InvalidArgument);
}

TEST_CASE("griffin-lim: vanishing projection keeps the previous phase") {
  const auto plan = StftPlan::hann(16, 100.0);
  const std::size_t len = 40;
  // Zero init projects to zero everywhere; the fallback phase is then the
  // (undefined) zero iterate, i.e. angle 0.
  const Spectrogram zero(ComplexMatrix::Zero(9, plan.num_frames(len)), plan, len);
  RealMatrix mag = RealMatrix::Zero(9, plan.num_frames(len));
  const auto r = griffin_lim_separate(mag, zero, 3);
  CHECK(r.estimate.data().cwiseAbs().maxCoeff() == 0.0);
  CHECK(all_finite(r.estimate.data()));
}

TEST_CASE("leroux: full-support kernel follows the Griffin-Lim sequence") {
  const auto plan = StftPlan::hann(16, 100.0);
  const std::size_t len = 60;
  const auto mag = random_positive(9, plan.num_frames(len), 12);
  const auto init = random_phase_spec(mag, plan, len, 13);
  const auto kernel = leroux_kernel(plan, KernelTruncation::full_support(plan));
  for (int iters = 1; iters <= 6; ++iters) {
    const auto gl = griffin_lim_separate(mag, init, iters);
    const auto lr = leroux_separate(mag, init, iters, kernel);
    CHECK((gl.estimate.data() - lr.estimate.data()).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("leroux: consistent init is a fixed point") {
  const auto plan = StftPlan::hann(32, 100.0);
  const auto spec = stft(white_noise(300, 14), plan);
  const auto kernel = leroux_kernel(plan, KernelTruncation::full_support(plan));
  const auto r = leroux_separate(spec.magnitude(), spec, 4, kernel);
  CHECK((r.estimate.data() - spec.data()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("leroux: truncated 3x3 kernel reduces inconsistency on a 16-frame toy") {
  const auto plan = StftPlan::hann(32, 100.0);
  const std::size_t len = 88;
  REQUIRE(plan.num_frames(len) == 16);
  const auto mag = random_positive(17, 16, 15);
  const auto init = random_phase_spec(mag, plan, len, 16);
  const auto r = leroux_separate(mag, init, 10, leroux_kernel(plan, {3, 3}));
  for (std::size_t i = 1; i < r.inconsistency.size(); ++i) {
    CHECK(r.inconsistency[i] < r.inconsistency[i - 1]);
  }
  CHECK((r.estimate.magnitude() - mag).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("leroux: kernel/plan mismatch is rejected") {
  const auto plan = StftPlan::hann(32, 100.0);
  const auto other = StftPlan::hann(16, 100.0);
  const auto mag = random_positive(17, plan.num_frames(64), 1);
  const auto init = random_phase_spec(mag, plan, 64, 2);
  CHECK_THROWS_AS(leroux_separate(mag, init, 1, leroux_kernel(other, {3, 3})), InvalidArgument);
}

TEST_CASE("phase_reconstruct_sources: both init modes keep their target magnitudes") {
  const auto plan = StftPlan::hann(64, 8000.0);
  const auto mix = stft(white_noise(800, 20), plan);
  const std::vector<RealMatrix> models{random_positive(mix.bins(), mix.frames(), 21),
                                       random_positive(mix.bins(), mix.frames(), 22)};
  const auto wiener = wiener_separate(mix, models);
  for (auto algo : {PhaseAlgorithm::griffin_lim, PhaseAlgorithm::leroux}) {
    PhaseReconOptions opts;
    opts.algorithm = algo;
    opts.iterations = 5;
    const auto a = phase_reconstruct_sources(mix, models, opts);
    opts.init = PhaseInit::nmf_magnitude;
    const auto b = phase_reconstruct_sources(mix, models, opts);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK((a.spectrograms[k].magnitude() - wiener.spectrograms[k].magnitude())
                .cwiseAbs()
                .maxCoeff() < 1e-12);
      CHECK((b.spectrograms[k].magnitude() - models[k]).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("wiener: disjoint-support tones with oracle magnitudes exceed 40 dB SDR") {
  const auto plan = StftPlan::hann(1024, 11025.0);
  const std::size_t len = 11025;
  std::vector<Signal> refs(2, Signal(len));
  Signal mix(len);
  for (std::size_t i = 0; i < len; ++i) {
    const double t = static_cast<double>(i) / 11025.0;
    refs[0][i] = std::sin(2.0 * std::numbers::pi * 440.0 * t);
    refs[1][i] = 0.7 * std::sin(2.0 * std::numbers::pi * 2500.0 * t + 0.3);
    mix[i] = refs[0][i] + refs[1][i];
  }
  const auto x = stft(mix, plan);
  const std::vector<RealMatrix> models{stft(refs[0], plan).magnitude(),
                                       stft(refs[1], plan).magnitude()};
  const auto set = wiener_separate(x, models);
  const auto scores = compute_scores(set.signals, refs, 1);
  MESSAGE("SDR " << scores.sdr[0] << " / " << scores.sdr[1]);
  CHECK(scores.sdr[0] > 40.0);
  CHECK(scores.sdr[1] > 40.0);
}
