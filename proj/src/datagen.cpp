#include "nmfsep/datagen.hpp"

#include "nmfsep/random.hpp"
#include "nmfsep/wav.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace nmfsep {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int max_harmonics_below(double fundamental, double depth, double nyquist) {
  // Strictly below Nyquist, including the vibrato excursion.
  return static_cast<int>(std::ceil(nyquist / (fundamental * (1.0 + depth)))) - 1;
}

HarmonicSourceSpec draw_source(Rng &rng, double fundamental, const DatagenOptions &o) {
  HarmonicSourceSpec s;
  s.fundamental = fundamental;
  if (o.vibrato) {
    s.vibrato_depth = rng.uniform(o.min_vibrato_depth, o.max_vibrato_depth);
    s.vibrato_rate = rng.uniform(o.min_vibrato_rate, o.max_vibrato_rate);
  }
  const int cap = max_harmonics_below(fundamental, s.vibrato_depth, 0.5 * o.sample_rate);
  const int n = std::min(rng.uniform_int(o.min_harmonics, o.max_harmonics), cap);
  require(n >= 1, "datagen: fundamental leaves no harmonic below Nyquist");
  for (int h = 0; h < n; ++h) {
    // Amplitudes on (min_amplitude, 1].
    s.amplitudes.push_back(o.min_amplitude + (1.0 - o.min_amplitude) * rng.uniform_open_closed());
    s.origin_phases.push_back(rng.uniform(0.0, kTwoPi));
  }
  s.damping = rng.uniform(o.min_damping, o.max_damping);
  s.onset = 0.0;
  s.duration = o.duration;
  return s;
}

// Some harmonic of `s` shares a nearest bin with a harmonic of an earlier
// source.
bool coincides(const std::vector<HarmonicSourceSpec> &earlier, const HarmonicSourceSpec &s,
               double bin_width) {
  for (const auto &e : earlier) {
    if (has_shared_bin({e, s}, bin_width)) {
      return true;
    }
  }
  return false;
}

bool well_separated(const std::vector<HarmonicSourceSpec> &earlier, const HarmonicSourceSpec &s,
                    double min_distance) {
  for (const auto &e : earlier) {
    if (min_cross_source_distance({e, s}) <= min_distance) {
      return false;
    }
  }
  return true;
}

std::string case_id(OverlapClass overlap, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%03d", to_string(overlap).c_str(), index);
  return buf;
}

} // namespace

double HarmonicSourceSpec::max_frequency() const {
  return harmonics() * fundamental * (1.0 + vibrato_depth);
}

Signal synthesize(const HarmonicSourceSpec &spec, double sample_rate, std::size_t length) {
  require(sample_rate > 0.0, "synthesize: sample rate must be positive");
  require(spec.amplitudes.size() == spec.origin_phases.size(),
          "synthesize: one phase per harmonic is required");
  require(spec.damping >= 0.0, "synthesize: damping must be nonnegative");
  require(spec.max_frequency() < 0.5 * sample_rate,
          "synthesize: a harmonic reaches the Nyquist frequency");
  Signal x(length, 0.0);
  for (std::size_t n = 0; n < length; ++n) {
    const double t = static_cast<double>(n) / sample_rate - spec.onset;
    if (t < 0.0 || t >= spec.duration) {
      continue;
    }
    // Integrated instantaneous frequency of the fundamental.
    double cycles = spec.fundamental * t;
    if (spec.vibrato_depth > 0.0 && spec.vibrato_rate > 0.0) {
      cycles += spec.fundamental * spec.vibrato_depth *
                (1.0 - std::cos(kTwoPi * spec.vibrato_rate * t)) / (kTwoPi * spec.vibrato_rate);
    }
    const double envelope = std::exp(-spec.damping * t);
    double acc = 0.0;
    for (int h = 0; h < spec.harmonics(); ++h) {
      acc += spec.amplitudes[static_cast<std::size_t>(h)] *
             std::cos(kTwoPi * (h + 1) * cycles + spec.origin_phases[static_cast<std::size_t>(h)]);
    }
    x[n] = envelope * acc;
  }
  return x;
}

std::string to_string(OverlapClass c) { return c == OverlapClass::none ? "none" : "forced"; }

OverlapClass overlap_class_from_string(const std::string &name) {
  if (name == "none") {
    return OverlapClass::none;
  }
  if (name == "forced") {
    return OverlapClass::forced;
  }
  throw InvalidArgument("unknown overlap class '" + name + "' (expected none or forced)");
}

Signal source_sum(const MixtureCase &c) {
  Signal sum(c.sources.empty() ? c.mixture.size() : c.sources.front().size(), 0.0);
  for (const auto &s : c.sources) {
    require(s.size() == sum.size(), "source_sum: sources differ in length");
    for (std::size_t i = 0; i < sum.size(); ++i) {
      sum[i] += s[i];
    }
  }
  return sum;
}

double min_cross_source_distance(const std::vector<HarmonicSourceSpec> &specs) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < specs.size(); ++a) {
    for (std::size_t b = a + 1; b < specs.size(); ++b) {
      for (int i = 0; i < specs[a].harmonics(); ++i) {
        for (int j = 0; j < specs[b].harmonics(); ++j) {
          best = std::min(best, std::abs(specs[a].harmonic_frequency(i) -
                                         specs[b].harmonic_frequency(j)));
        }
      }
    }
  }
  return best;
}

bool has_shared_bin(const std::vector<HarmonicSourceSpec> &specs, double bin_width) {
  for (std::size_t a = 0; a < specs.size(); ++a) {
    for (std::size_t b = a + 1; b < specs.size(); ++b) {
      for (int i = 0; i < specs[a].harmonics(); ++i) {
        for (int j = 0; j < specs[b].harmonics(); ++j) {
          if (std::lround(specs[a].harmonic_frequency(i) / bin_width) ==
              std::lround(specs[b].harmonic_frequency(j) / bin_width)) {
            return true;
          }
        }
      }
    }
  }
  return false;
}

MixtureCase gen_harmonic_mixture(OverlapClass overlap, std::uint64_t seed,
                                 const DatagenOptions &o) {
  require(o.sources >= 2, "datagen: at least two sources are required");
  require(std::isfinite(o.snr_db), "datagen: SNR must be finite");
  require(o.sample_rate > 0.0 && o.duration > 0.0, "datagen: invalid rate or duration");
  require(o.min_fundamental > 0.0 && o.min_fundamental <= o.max_fundamental,
          "datagen: invalid fundamental range");
  require(o.min_harmonics >= 1 && o.min_harmonics <= o.max_harmonics,
          "datagen: invalid harmonic count range");
  require(o.window_length >= 2, "datagen: invalid window length");
  const double bin_width = o.sample_rate / o.window_length;
  Rng rng(seed);

  std::vector<HarmonicSourceSpec> specs;
  specs.push_back(draw_source(rng, rng.uniform(o.min_fundamental, o.max_fundamental), o));
  for (int k = 1; k < o.sources; ++k) {
    bool accepted = false;
    double closest = 0.0;
    for (int draw = 0; draw < o.max_draws && !accepted; ++draw) {
      double f0 = rng.uniform(o.min_fundamental, o.max_fundamental);
      if (overlap == OverlapClass::forced) {
        // Put harmonic h2 of the new source on harmonic h1 of an earlier
        // one, jittered within a quarter bin.
        const auto &other = specs[static_cast<std::size_t>(rng.uniform_int(0, k - 1))];
        const int h1 = rng.uniform_int(1, other.harmonics());
        const int h2 = rng.uniform_int(1, o.max_harmonics);
        const double jitter = rng.uniform(-0.25, 0.25) * bin_width;
        f0 = (h1 * other.fundamental + jitter) / h2;
        if (f0 < o.min_fundamental || f0 > o.max_fundamental) {
          continue;
        }
      }
      auto candidate = draw_source(rng, f0, o);
      if (overlap == OverlapClass::forced) {
        accepted = coincides(specs, candidate, bin_width);
      } else {
        accepted = well_separated(specs, candidate, o.separation_bins * bin_width);
        closest = std::max(closest, [&] {
          double m = std::numeric_limits<double>::infinity();
          for (const auto &e : specs) {
            m = std::min(m, min_cross_source_distance({e, candidate}));
          }
          return m;
        }());
      }
      if (accepted) {
        specs.push_back(std::move(candidate));
      }
    }
    if (!accepted) {
      std::ostringstream msg;
      msg << "datagen: could not satisfy overlap class '" << to_string(overlap) << "' for source "
          << k << " after " << o.max_draws << " draws (seed " << seed << ", bin width "
          << bin_width << " Hz";
      if (overlap == OverlapClass::none) {
        msg << ", best cross-source distance " << closest << " Hz, needed > "
            << o.separation_bins * bin_width << " Hz";
      }
      msg << ")";
      throw NumericalError(msg.str());
    }
  }

  const auto length = static_cast<std::size_t>(std::llround(o.duration * o.sample_rate));
  MixtureCase c;
  c.sample_rate = o.sample_rate;
  c.overlap = overlap;
  c.seed = seed;
  for (const auto &s : specs) {
    c.sources.push_back(synthesize(s, o.sample_rate, length));
  }
  c.specs = std::move(specs);
  c.mixture = source_sum(c);
  double power = 0.0;
  for (double v : c.mixture) {
    power += v * v;
  }
  power /= static_cast<double>(length);
  const double sigma = std::sqrt(power * std::pow(10.0, -o.snr_db / 10.0));
  for (auto &v : c.mixture) {
    v += sigma * rng.normal();
  }
  // Store the realized noise so that mixture - sum == noise exactly.
  const Signal clean = source_sum(c);
  c.noise.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    c.noise[i] = c.mixture[i] - clean[i];
  }
  return c;
}

std::vector<MixtureCase> gen_dataset(int n_cases, OverlapClass overlap,
                                     std::uint64_t master_seed, const DatagenOptions &options) {
  require(n_cases >= 1, "gen_dataset: need at least one case");
  const std::uint64_t stream = overlap == OverlapClass::none ? 0 : 1;
  std::vector<MixtureCase> cases(static_cast<std::size_t>(n_cases));
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_cases; ++i) {
    try {
      const std::uint64_t seed = mix_seed(master_seed, 2 * static_cast<std::uint64_t>(i) + stream);
      auto c = gen_harmonic_mixture(overlap, seed, options);
      c.id = case_id(overlap, i);
      cases[static_cast<std::size_t>(i)] = std::move(c);
    } catch (...) {
#pragma omp critical(nmfsep_datagen_failure)
      if (!failure) {
        failure = std::current_exception();
      }
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
  return cases;
}

namespace {

nlohmann::json spec_to_json(const HarmonicSourceSpec &s) {
  return {{"fundamental", s.fundamental},   {"amplitudes", s.amplitudes},
          {"origin_phases", s.origin_phases}, {"damping", s.damping},
          {"onset", s.onset},               {"duration", s.duration},
          {"vibrato_depth", s.vibrato_depth}, {"vibrato_rate", s.vibrato_rate}};
}

HarmonicSourceSpec spec_from_json(const nlohmann::json &j) {
  HarmonicSourceSpec s;
  s.fundamental = j.at("fundamental").get<double>();
  s.amplitudes = j.at("amplitudes").get<std::vector<double>>();
  s.origin_phases = j.at("origin_phases").get<std::vector<double>>();
  s.damping = j.value("damping", 0.0);
  s.onset = j.value("onset", 0.0);
  s.duration = j.value("duration", 1.0);
  s.vibrato_depth = j.value("vibrato_depth", 0.0);
  s.vibrato_rate = j.value("vibrato_rate", 0.0);
  return s;
}

} // namespace

std::filesystem::path write_dataset(const std::filesystem::path &dir,
                                    const std::vector<MixtureCase> &cases,
                                    std::uint64_t master_seed) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["master_seed"] = master_seed;
  manifest["cases"] = nlohmann::json::array();
  for (const auto &c : cases) {
    require(!c.id.empty(), "write_dataset: every case needs an id");
    nlohmann::json entry;
    entry["id"] = c.id;
    entry["seed"] = c.seed;
    entry["overlap_class"] = to_string(c.overlap);
    entry["sample_rate"] = c.sample_rate;
    const std::string mix_name = c.id + "_mix.wav";
    wav_write(dir / mix_name, c.mixture, c.sample_rate, WavFormat::float32);
    entry["mixture"] = mix_name;
    entry["sources"] = nlohmann::json::array();
    for (std::size_t k = 0; k < c.sources.size(); ++k) {
      const std::string name = c.id + "_src" + std::to_string(k) + ".wav";
      wav_write(dir / name, c.sources[k], c.sample_rate, WavFormat::float32);
      entry["sources"].push_back(name);
    }
    entry["specs"] = nlohmann::json::array();
    for (const auto &s : c.specs) {
      entry["specs"].push_back(spec_to_json(s));
    }
    manifest["cases"].push_back(std::move(entry));
  }
  const auto path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) {
    throw InvalidArgument("cannot write manifest " + path.string());
  }
  out << manifest.dump(2) << '\n';
  return path;
}

std::vector<MixtureCase> load_dataset(const std::filesystem::path &manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) {
    throw InvalidArgument("cannot open dataset manifest " + manifest_path.string());
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw InvalidArgument("malformed dataset manifest " + manifest_path.string() + ": " +
                          e.what());
  }
  const auto base = manifest_path.parent_path();
  std::vector<MixtureCase> cases;
  try {
    for (const auto &entry : manifest.at("cases")) {
      MixtureCase c;
      c.id = entry.at("id").get<std::string>();
      c.seed = entry.value("seed", std::uint64_t{0});
      c.overlap = overlap_class_from_string(entry.value("overlap_class", std::string("none")));
      const auto mix = wav_read(base / entry.at("mixture").get<std::string>());
      c.mixture = mix.samples;
      c.sample_rate = mix.sample_rate;
      for (const auto &src : entry.at("sources")) {
        const auto s = wav_read(base / src.get<std::string>());
        require(s.samples.size() == c.mixture.size() && s.sample_rate == c.sample_rate,
                "dataset case " + c.id + ": source length or rate differs from the mixture");
        c.sources.push_back(s.samples);
      }
      if (entry.contains("specs")) {
        for (const auto &s : entry.at("specs")) {
          c.specs.push_back(spec_from_json(s));
        }
      }
      const Signal clean = source_sum(c);
      c.noise.resize(c.mixture.size());
      for (std::size_t i = 0; i < clean.size(); ++i) {
        c.noise[i] = c.mixture[i] - clean[i];
      }
      cases.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception &e) {
    throw InvalidArgument("malformed dataset manifest " + manifest_path.string() + ": " +
                          e.what());
  }
  return cases;
}

} // namespace nmfsep
