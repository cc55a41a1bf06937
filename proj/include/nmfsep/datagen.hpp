#pragma once

#include "nmfsep/common.hpp"
#include "nmfsep/tf_transform.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nmfsep {

/// A sum of exponentially damped harmonics sharing one damping rate.
struct HarmonicSourceSpec {
  double fundamental = 440.0;       ///< Hz
  std::vector<double> amplitudes;   ///< one per harmonic
  std::vector<double> origin_phases; ///< radians, one per harmonic
  double damping = 1.0;             ///< 1/s
  double onset = 0.0;               ///< s
  double duration = 1.0;            ///< s
  /// Sinusoidal frequency modulation; depth is a fraction of the frequency.
  double vibrato_depth = 0.0;
  double vibrato_rate = 0.0; ///< Hz

  int harmonics() const { return static_cast<int>(amplitudes.size()); }
  double harmonic_frequency(int h) const { return (h + 1) * fundamental; }
  /// Highest instantaneous frequency reached by any harmonic.
  double max_frequency() const;
};

/// Renders `spec` at `sample_rate` into `length` samples.
Signal synthesize(const HarmonicSourceSpec &spec, double sample_rate, std::size_t length);

enum class OverlapClass { none, forced };

std::string to_string(OverlapClass c);
OverlapClass overlap_class_from_string(const std::string &name);

struct DatagenOptions {
  int sources = 2;
  double snr_db = 60.0;
  double sample_rate = 11025.0;
  double duration = 1.0;
  /// Window length of the bin grid the overlap classes refer to.
  int window_length = 512;
  double min_fundamental = 110.0;
  double max_fundamental = 880.0;
  int min_harmonics = 4;
  int max_harmonics = 10;
  double min_amplitude = 0.2;
  double min_damping = 0.5;
  double max_damping = 8.0;
  /// Bins between harmonics of different sources required by `none`.
  double separation_bins = 2.0;
  bool vibrato = false;
  double min_vibrato_depth = 0.005;
  double max_vibrato_depth = 0.02;
  double min_vibrato_rate = 4.0;
  double max_vibrato_rate = 7.0;
  int max_draws = 1000;
};

struct MixtureCase {
  std::string id;
  Signal mixture;
  std::vector<Signal> sources;
  /// mixture - (sources[0] + sources[1] + ...), summed left to right.
  Signal noise;
  double sample_rate = 11025.0;
  OverlapClass overlap = OverlapClass::none;
  std::uint64_t seed = 0;
  std::vector<HarmonicSourceSpec> specs;
};

/// Sample-wise sum of the sources, accumulated in source order.
Signal source_sum(const MixtureCase &c);

/// Smallest |f_i - f_j| over harmonics of different sources, Hz.
double min_cross_source_distance(const std::vector<HarmonicSourceSpec> &specs);

/// True when harmonics of two different sources share a bin of width
/// `bin_width` (nearest-bin rounding).
bool has_shared_bin(const std::vector<HarmonicSourceSpec> &specs, double bin_width);

/// Random damped-harmonic mixture.
///
/// For `none`, every pair of harmonics from different sources is more than
/// separation_bins bins apart; for `forced`, each source after the first
/// puts at least one harmonic in the same bin as a harmonic of an earlier
/// source. White Gaussian noise is added at snr_db below the clean mixture
/// power. Throws NumericalError when 1000 draws cannot meet the class.
MixtureCase gen_harmonic_mixture(OverlapClass overlap, std::uint64_t seed,
                                 const DatagenOptions &options = {});

/// n_cases mixtures with per-case seeds derived from `master_seed`.
std::vector<MixtureCase> gen_dataset(int n_cases, OverlapClass overlap,
                                     std::uint64_t master_seed,
                                     const DatagenOptions &options = {});

inline constexpr int kDefaultCasesPerClass = 30;

/// Writes every case as WAV files plus `manifest.json` under `dir` and
/// returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path &dir,
                                    const std::vector<MixtureCase> &cases,
                                    std::uint64_t master_seed);

/// Reads a manifest written by write_dataset (or by hand: an object with a
/// "cases" array of {id, mixture, sources[, seed, overlap_class]}; paths
/// relative to the manifest). Noise is mixture minus the source sum.
std::vector<MixtureCase> load_dataset(const std::filesystem::path &manifest);

} // namespace nmfsep
