#include "nmfsep/cnmf.hpp"
#include "nmfsep/random.hpp"
#include "oracles/naive_dft.hpp"

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

ComplexMatrix random_phasors(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  ComplexMatrix m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) {
      m(i, j) = std::polar(1.0, rng.uniform(0.0, 2.0 * std::numbers::pi));
    }
  }
  return m;
}

CnmfModel random_model(int bins, int frames, int k, std::uint64_t seed, double gamma = 0.0) {
  CnmfModel m{random_positive(bins, k, seed), random_positive(k, frames, seed + 1), {}, gamma};
  for (int c = 0; c < k; ++c) {
    m.phases.push_back(random_phasors(bins, frames, seed + 10 + static_cast<std::uint64_t>(c)));
  }
  return m;
}

} // namespace

TEST_CASE("cnmf objective: exact model gives zero") {
  const auto plan = StftPlan::hann(32, 1000.0);
  const std::size_t len = 100;
  const auto model = random_model(17, plan.num_frames(len), 2, 1);
  const Spectrogram x(model.prediction(), plan, len);
  CHECK(cnmf_objective(x, model) == 0.0);
}

TEST_CASE("cnmf objective: single component with |X| and angle(X) has zero fit") {
  const auto plan = StftPlan::hann(32, 1000.0);
  const auto x = stft(white_noise(200, 2), plan);
  // A rank-one magnitude so that a single component can match it.
  Rng rng(3);
  RealVector u(x.bins()), v(x.frames());
  for (auto &e : u) e = rng.uniform_open_closed();
  for (auto &e : v) e = rng.uniform_open_closed();
  const ComplexMatrix phase = random_phasors(x.bins(), x.frames(), 4);
  const RealMatrix rank1 = u * v.transpose();
  const Spectrogram target = x.with_data(phase.cwiseProduct(rank1.cast<Complex>()));
  CnmfModel model{u, v.transpose(), {phase}, 0.0};
  CHECK(cnmf_objective(target, model) < 1e-24);
}

TEST_CASE("cnmf objective: matches direct summation, with and without gamma") {
  const auto plan = StftPlan::hann(8, 100.0);
  const std::size_t len = 5;
  const int frames = plan.num_frames(len);
  const auto model = random_model(5, frames, 2, 5, 0.0);
  Rng rng(6);
  ComplexMatrix data(5, frames);
  for (int j = 0; j < frames; ++j) {
    for (int i = 0; i < 5; ++i) {
      data(i, j) = {rng.normal(), rng.normal()};
    }
  }
  const Spectrogram x(data, plan, len);
  double fit = 0.0;
  for (int j = 0; j < frames; ++j) {
    for (int i = 0; i < 5; ++i) {
      Complex pred{};
      for (int k = 0; k < 2; ++k) {
        pred += model.w(i, k) * model.h(k, j) * model.phases[static_cast<std::size_t>(k)](i, j);
      }
      fit += std::norm(data(i, j) - pred);
    }
  }
  CHECK(cnmf_objective(x, model) == doctest::Approx(fit).epsilon(1e-12));

  auto with_gamma = model;
  with_gamma.gamma = 0.7;
  double penalty = 0.0;
  for (int k = 0; k < 2; ++k) {
    const ComplexMatrix comp = model.component(k);
    const auto y = oracle::naive_istft(comp, plan, len);
    penalty += oracle::full_spectrum_distance(comp, oracle::naive_stft(y, plan), 8);
  }
  CHECK(cnmf_objective(x, with_gamma) == doctest::Approx(fit + 0.7 * penalty).epsilon(1e-12));
}

TEST_CASE("cnmf: residual shares sum to the mixture") {
  const auto plan = StftPlan::hann(64, 1000.0);
  const auto x = stft(white_noise(600, 7), plan);
  const auto model = random_model(x.bins(), x.frames(), 3, 8);
  const auto shares = cnmf_residual_shares(x, model);
  ComplexMatrix sum = ComplexMatrix::Zero(x.bins(), x.frames());
  for (const auto &s : shares) {
    sum += s;
  }
  CHECK((sum - x.data()).cwiseAbs().maxCoeff() <= 1e-12 * x.data().cwiseAbs().maxCoeff());
}

TEST_CASE("cnmf: exact model is a fixed point") {
  const auto plan = StftPlan::hann(32, 1000.0);
  const std::size_t len = 150;
  const auto model = random_model(17, plan.num_frames(len), 2, 9);
  const Spectrogram x(model.prediction(), plan, len);
  const auto next = cnmf_step(x, model);
  CHECK((next.w - model.w).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((next.h - model.h).cwiseAbs().maxCoeff() < 1e-10);
  for (int k = 0; k < 2; ++k) {
    CHECK((next.phases[static_cast<std::size_t>(k)] - model.phases[static_cast<std::size_t>(k)])
              .cwiseAbs()
              .maxCoeff() < 1e-10);
  }
}

TEST_CASE("cnmf: objective non-increasing for gamma = 0 (property)") {
  const auto plan = StftPlan::hann(64, 1000.0);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto x = stft(white_noise(700, 30 + seed), plan);
    CnmfOptions opts;
    opts.components = 1 + static_cast<int>(seed % 3);
    opts.seed = seed;
    const auto r = fit_cnmf(x, opts);
    REQUIRE(r.trajectory.size() == 31);
    for (std::size_t i = 1; i < r.trajectory.size(); ++i) {
      CHECK(r.trajectory[i] <= r.trajectory[i - 1] + 1e-10 * r.trajectory[0]);
    }
    for (const auto &p : r.model.phases) {
      CHECK((p.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("cnmf: one component converges to |X| and angle(X)") {
  const auto plan = StftPlan::hann(32, 1000.0);
  const std::size_t len = 300;
  const int frames = plan.num_frames(len);
  Rng rng(40);
  RealVector u(17), v(frames);
  for (auto &e : u) e = rng.uniform_open_closed();
  for (auto &e : v) e = rng.uniform_open_closed();
  const RealMatrix mag = u * v.transpose();
  const ComplexMatrix phase = random_phasors(17, frames, 41);
  const Spectrogram x(phase.cwiseProduct(mag.cast<Complex>()), plan, len);
  CnmfOptions opts;
  opts.components = 1;
  opts.iterations = 50;
  const auto r = fit_cnmf(x, opts);
  CHECK(r.trajectory.back() < 1e-6 * x.data().squaredNorm());
  CHECK((r.model.w * r.model.h - mag).norm() < 1e-3 * mag.norm());
  CHECK((r.model.phases[0] - phase).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("cnmf: fixed magnitudes only move phases") {
  const auto plan = StftPlan::hann(64, 1000.0);
  const auto x = stft(white_noise(600, 50), plan);
  const auto model = random_model(x.bins(), x.frames(), 2, 51);
  CnmfStepOptions step;
  step.update_factors = false;
  const auto r = refine_cnmf(x, model, 10, step);
  CHECK(r.model.w == model.w);
  CHECK(r.model.h == model.h);
  for (std::size_t i = 1; i < r.trajectory.size(); ++i) {
    CHECK(r.trajectory[i] <= r.trajectory[i - 1] + 1e-10 * r.trajectory[0]);
  }
}

TEST_CASE("cnmf: sparsity shrinks activations") {
  const auto plan = StftPlan::hann(64, 1000.0);
  const auto x = stft(white_noise(600, 60), plan);
  CnmfOptions dense;
  dense.seed = 3;
  CnmfOptions sparse = dense;
  sparse.step.sparsity = 5.0;
  CHECK(fit_cnmf(x, sparse).model.h.sum() < fit_cnmf(x, dense).model.h.sum());
}

TEST_CASE("cnmf: defaults, determinism, gamma variant and errors") {
  CHECK(CnmfOptions{}.iterations == 30);
  CHECK(CnmfOptions{}.gamma == 0.0);
  const auto plan = StftPlan::hann(64, 1000.0);
  const auto x = stft(white_noise(500, 70), plan);
  CnmfOptions opts;
  opts.seed = 12;
  opts.iterations = 5;
  const auto a = fit_cnmf(x, opts);
  const auto b = fit_cnmf(x, opts);
  CHECK(a.trajectory == b.trajectory);
  CHECK(a.model.w == b.model.w);
  opts.gamma = 1.0;
  const auto lr = fit_cnmf(x, opts);
  CHECK(lr.model.gamma == 1.0);
  CHECK(lr.model.w != a.model.w);
  for (const auto &p : lr.model.phases) {
    CHECK((p.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  opts.components = 0;
  CHECK_THROWS_AS(fit_cnmf(x, opts), InvalidArgument);
  auto bad = a.model;
  bad.w(0, 0) = std::nan("");
  CHECK_THROWS_AS(cnmf_step(x, bad), InvalidArgument);
}

TEST_CASE("cnmf separate: sources sum to the model prediction") {
  const auto plan = StftPlan::hann(64, 1000.0);
  const auto x = stft(white_noise(500, 80), plan);
  CnmfOptions opts;
  opts.components = 3;
  const auto r = fit_cnmf(x, opts);
  const auto set = cnmf_separate(x, r.model, Grouping{0, 1, 1});
  REQUIRE(set.sources() == 2);
  CHECK((set.spectrograms[0].data() + set.spectrograms[1].data() - r.model.prediction())
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}
