#pragma once

// Test-only exact posterior for one HRNMF band, obtained by conditioning
// the full joint complex Gaussian of all component samples on the
// observations. Costs O((K T)^3); no recursion is shared with the smoother.

#include "nmfsep/hrnmf.hpp"

namespace oracle {

struct DensePosterior {
  nmfsep::ComplexMatrix means;       // K x T
  nmfsep::RealMatrix second_moments; // K x T
  nmfsep::ComplexMatrix lag1;        // K x T, column 0 zero
  nmfsep::RealVector residual_power; // T
  double loglik = 0.0;
};

/// Impulse response matrix L with X = L b for the AR recursion of `ar`.
nmfsep::ComplexMatrix ar_impulse_matrix(const nmfsep::ComplexVector &ar, int frames);

DensePosterior dense_band_posterior(const nmfsep::ComplexVector &x,
                                    const nmfsep::BandModel &model);

} // namespace oracle
