#include "nmfsep/harness.hpp"

#include "nmfsep/cnmf.hpp"
#include "nmfsep/phase_recon.hpp"
#include "nmfsep/random.hpp"

#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <tuple>

namespace nmfsep {
namespace {

using json = nlohmann::json;

constexpr std::array<const char *, 3> kMetrics{"SDR", "SIR", "SAR"};

struct MethodName {
  MethodId id;
  const char *name;
};

constexpr std::array<MethodName, 6> kMethodNames{{{MethodId::nmf_wiener, "NMF-Wiener"},
                                                  {MethodId::nmf_gl, "NMF-GL"},
                                                  {MethodId::nmf_lr, "NMF-LR"},
                                                  {MethodId::cnmf, "CNMF"},
                                                  {MethodId::cnmf_lr, "CNMF-LR"},
                                                  {MethodId::hrnmf, "HRNMF"}}};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return s;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::uint64_t fnv1a(const std::string &s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const std::vector<double> &metric_values(const SeparationScores &s, std::size_t metric) {
  return metric == 0 ? s.sdr : metric == 1 ? s.sir : s.sar;
}

double mean_of(const std::vector<double> &v) {
  double acc = 0.0;
  for (double x : v) {
    acc += x;
  }
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

Grouping consecutive_grouping(int sources, int per_source) {
  Grouping g;
  for (int k = 0; k < sources; ++k) {
    for (int j = 0; j < per_source; ++j) {
      g.push_back(k);
    }
  }
  return g;
}

bool is_nmf_family(MethodId m) {
  return m == MethodId::nmf_wiener || m == MethodId::nmf_gl || m == MethodId::nmf_lr;
}

// Wiener, Griffin-Lim or Le Roux separation from nonnegative source models
// fitted on magnitudes (KL, Euclidean) or powers (IS).
std::vector<Signal> separate_from_models(const Spectrogram &x, std::vector<RealMatrix> models,
                                         MethodId method, const ProtocolConfig &config) {
  if (method == MethodId::nmf_wiener) {
    return wiener_separate(x, models).signals;
  }
  if (config.nmf_divergence == Divergence::is) {
    for (auto &m : models) {
      m = m.cwiseSqrt();
    }
  }
  PhaseReconOptions opts;
  opts.algorithm = method == MethodId::nmf_gl ? PhaseAlgorithm::griffin_lim : PhaseAlgorithm::leroux;
  opts.init = PhaseInit::wiener_magnitude;
  opts.iterations = config.phase_iterations;
  return phase_reconstruct_sources(x, models, opts).signals;
}

RealMatrix nmf_input(const Spectrogram &x, Divergence kind) {
  return kind == Divergence::is ? RealMatrix(x.power()) : x.magnitude();
}

HrnmfOptions hrnmf_options(const ProtocolConfig &config, int components, int iterations,
                           std::uint64_t seed) {
  HrnmfOptions o;
  o.components = components;
  o.iterations = iterations;
  o.init = config.hrnmf_init;
  o.init_iterations = config.hrnmf_init_iterations;
  o.order = config.hrnmf_order;
  o.noise_fraction = config.hrnmf_noise_fraction;
  o.seed = seed;
  return o;
}

CnmfOptions cnmf_options(const ProtocolConfig &config, MethodId method, int components,
                         std::uint64_t seed) {
  CnmfOptions o;
  o.components = components;
  o.gamma = method == MethodId::cnmf_lr ? config.cnmf_lr_gamma : 0.0;
  o.iterations = config.cnmf_iterations;
  o.seed = seed;
  o.step.sparsity = config.cnmf_sparsity;
  return o;
}

} // namespace

std::string to_string(MethodId m) {
  for (const auto &n : kMethodNames) {
    if (n.id == m) {
      return n.name;
    }
  }
  return "?";
}

MethodId method_from_string(const std::string &name) {
  for (const auto &n : kMethodNames) {
    if (lower(name) == lower(n.name)) {
      return n.id;
    }
  }
  throw InvalidArgument("unknown method '" + name +
                        "' (expected NMF-Wiener, NMF-GL, NMF-LR, CNMF, CNMF-LR or HRNMF)");
}

const std::vector<MethodId> &all_methods() {
  static const std::vector<MethodId> methods{MethodId::nmf_wiener, MethodId::nmf_gl,
                                             MethodId::nmf_lr,     MethodId::cnmf,
                                             MethodId::cnmf_lr,    MethodId::hrnmf};
  return methods;
}

std::string to_string(Mode m) { return m == Mode::blind ? "blind" : "oracle"; }

Mode mode_from_string(const std::string &name) {
  if (lower(name) == "blind") {
    return Mode::blind;
  }
  if (lower(name) == "oracle") {
    return Mode::oracle;
  }
  throw InvalidArgument("unknown mode '" + name + "' (expected blind or oracle)");
}

std::string to_string(HrnmfInit init) {
  switch (init) {
  case HrnmfInit::random:
    return "random";
  case HrnmfInit::is_nmf:
    return "ISNMF";
  case HrnmfInit::kl_nmf:
    return "KLNMF";
  }
  return "?";
}

HrnmfInit hrnmf_init_from_string(const std::string &name) {
  const auto n = lower(name);
  if (n == "random") {
    return HrnmfInit::random;
  }
  if (n == "isnmf" || n == "is") {
    return HrnmfInit::is_nmf;
  }
  if (n == "klnmf" || n == "kl") {
    return HrnmfInit::kl_nmf;
  }
  throw InvalidArgument("unknown HRNMF initialization '" + name +
                        "' (expected random, ISNMF or KLNMF)");
}

std::vector<MixtureCase> load_cases(const DatasetSpec &spec) {
  if (!spec.manifest.empty()) {
    return load_dataset(spec.manifest);
  }
  require(!spec.classes.empty(), "dataset: no overlap classes selected");
  std::vector<MixtureCase> cases;
  for (auto overlap : spec.classes) {
    auto part = gen_dataset(spec.cases_per_class, overlap, spec.seed, spec.generator);
    std::move(part.begin(), part.end(), std::back_inserter(cases));
  }
  return cases;
}

int ProtocolConfig::window_length(MethodId m) const {
  return is_nmf_family(m) ? nmf_window : complex_window;
}

void ProtocolConfig::validate() {
  warnings.clear();
  for (int w : {nmf_window, complex_window}) {
    require(w >= 4 && w % 4 == 0, "window lengths must be positive multiples of 4");
  }
  if (nmf_window != kNmfFamilyWindow || complex_window != kComplexFamilyWindow) {
    require(override_fairness,
            "window lengths differ from the fairness rule (1024 for NMF-Wiener/GL/LR, 512 for "
            "CNMF/CNMF-LR/HRNMF); set override_fairness to use them");
    warnings.push_back("fairness rule overridden: NMF family window " +
                       std::to_string(nmf_window) + ", complex family window " +
                       std::to_string(complex_window));
  }
  require(nmf_iterations >= 1 && phase_iterations >= 0 && cnmf_iterations >= 1 &&
              hrnmf_iterations >= 1 && hrnmf_oracle_iterations >= 1 &&
              hrnmf_init_iterations >= 1 && hrnmf_refit_iterations >= 0,
          "iteration counts must be positive");
  require(hrnmf_order >= 0, "HRNMF order must be nonnegative");
  require(hrnmf_noise_fraction > 0.0, "HRNMF noise fraction must be positive");
  require(cnmf_lr_gamma >= 0.0 && cnmf_sparsity >= 0.0, "CNMF weights must be nonnegative");
  require(components_per_source >= 1, "components_per_source must be at least 1");
  require(filter_length >= 1, "filter_length must be at least 1");
  require(repeats_per_case >= 1, "repeats_per_case must be at least 1");
  require(threads >= 0, "threads must be nonnegative");
  require(!methods.empty(), "no methods selected");
  require(!modes.empty(), "no modes selected");
}

namespace {

void check_keys(const json &obj, const std::set<std::string> &allowed, const std::string &where) {
  require(obj.is_object(), where + " must be a JSON object");
  for (const auto &item : obj.items()) {
    require(allowed.count(item.key()) > 0, "unknown config key '" + where + "." + item.key() + "'");
  }
}

template <typename T> void read(const json &obj, const char *key, T &out) {
  if (obj.contains(key)) {
    out = obj.at(key).get<T>();
  }
}

} // namespace

ProtocolConfig parse_config(const std::string &json_text) {
  ProtocolConfig c;
  try {
    const json root = json::parse(json_text);
    check_keys(root,
               {"seed", "methods", "modes", "dataset", "windows", "iterations", "nmf", "cnmf",
                "hrnmf", "metrics", "components_per_source", "repeats_per_case", "threads"},
               "config");
    read(root, "seed", c.seed);
    if (root.contains("methods")) {
      c.methods.clear();
      for (const auto &m : root.at("methods")) {
        c.methods.push_back(method_from_string(m.get<std::string>()));
      }
    }
    if (root.contains("modes")) {
      c.modes.clear();
      for (const auto &m : root.at("modes")) {
        c.modes.push_back(mode_from_string(m.get<std::string>()));
      }
    }
    read(root, "components_per_source", c.components_per_source);
    read(root, "repeats_per_case", c.repeats_per_case);
    read(root, "threads", c.threads);
    if (root.contains("windows")) {
      const auto &w = root.at("windows");
      check_keys(w, {"nmf", "complex", "override_fairness"}, "windows");
      read(w, "nmf", c.nmf_window);
      read(w, "complex", c.complex_window);
      read(w, "override_fairness", c.override_fairness);
    }
    if (root.contains("iterations")) {
      const auto &it = root.at("iterations");
      check_keys(it, {"nmf", "phase", "cnmf", "hrnmf", "hrnmf_oracle", "hrnmf_init", "hrnmf_refit"},
                 "iterations");
      read(it, "nmf", c.nmf_iterations);
      read(it, "phase", c.phase_iterations);
      read(it, "cnmf", c.cnmf_iterations);
      read(it, "hrnmf", c.hrnmf_iterations);
      read(it, "hrnmf_oracle", c.hrnmf_oracle_iterations);
      read(it, "hrnmf_init", c.hrnmf_init_iterations);
      read(it, "hrnmf_refit", c.hrnmf_refit_iterations);
    }
    if (root.contains("nmf")) {
      const auto &n = root.at("nmf");
      check_keys(n, {"divergence"}, "nmf");
      if (n.contains("divergence")) {
        c.nmf_divergence = divergence_from_string(n.at("divergence").get<std::string>());
      }
    }
    if (root.contains("cnmf")) {
      const auto &n = root.at("cnmf");
      check_keys(n, {"lr_gamma", "sparsity"}, "cnmf");
      read(n, "lr_gamma", c.cnmf_lr_gamma);
      read(n, "sparsity", c.cnmf_sparsity);
    }
    if (root.contains("hrnmf")) {
      const auto &h = root.at("hrnmf");
      check_keys(h, {"init", "order", "noise_fraction", "oracle_refit_h"}, "hrnmf");
      if (h.contains("init")) {
        c.hrnmf_init = hrnmf_init_from_string(h.at("init").get<std::string>());
      }
      read(h, "order", c.hrnmf_order);
      read(h, "noise_fraction", c.hrnmf_noise_fraction);
      read(h, "oracle_refit_h", c.hrnmf_oracle_refit_h);
    }
    if (root.contains("metrics")) {
      const auto &m = root.at("metrics");
      check_keys(m, {"filter_length"}, "metrics");
      read(m, "filter_length", c.filter_length);
    }
    if (root.contains("dataset")) {
      const auto &d = root.at("dataset");
      check_keys(d,
                 {"manifest", "cases_per_class", "classes", "seed", "snr_db", "sample_rate",
                  "duration", "vibrato", "sources"},
                 "dataset");
      read(d, "manifest", c.dataset.manifest);
      read(d, "cases_per_class", c.dataset.cases_per_class);
      read(d, "seed", c.dataset.seed);
      read(d, "snr_db", c.dataset.generator.snr_db);
      read(d, "sample_rate", c.dataset.generator.sample_rate);
      read(d, "duration", c.dataset.generator.duration);
      read(d, "vibrato", c.dataset.generator.vibrato);
      read(d, "sources", c.dataset.generator.sources);
      if (d.contains("classes")) {
        c.dataset.classes.clear();
        for (const auto &cl : d.at("classes")) {
          c.dataset.classes.push_back(overlap_class_from_string(cl.get<std::string>()));
        }
      }
    }
  } catch (const json::exception &e) {
    throw InvalidArgument(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

ProtocolConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidArgument("cannot open config file " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

MethodOutput separate_blind(const Signal &mixture, double sample_rate, int sources,
                            MethodId method, const ProtocolConfig &config, std::uint64_t seed) {
  require(sources >= 1, "separate: need at least one source");
  const auto plan = StftPlan::hann(config.window_length(method), sample_rate);
  const auto x = stft(mixture, plan);
  const int k = sources * config.components_per_source;
  const auto grouping = consecutive_grouping(sources, config.components_per_source);
  MethodOutput out;
  if (is_nmf_family(method)) {
    const auto fit =
        fit_nmf(nmf_input(x, config.nmf_divergence),
                NmfOptions{k, config.nmf_divergence, config.nmf_iterations, seed});
    out.trajectory = fit.trajectory;
    out.estimates = separate_from_models(x, grouped_components(fit.factors, grouping), method, config);
  } else if (method == MethodId::hrnmf) {
    const auto fit = fit_hrnmf(x, hrnmf_options(config, k, config.hrnmf_iterations, seed));
    out.trajectory = fit.loglik;
    out.estimates = hrnmf_separate(x, fit.model, grouping).signals;
  } else {
    const auto fit = fit_cnmf(x, cnmf_options(config, method, k, seed));
    out.trajectory = fit.trajectory;
    out.estimates = cnmf_separate(x, fit.model, grouping).signals;
  }
  return out;
}

MethodOutput separate_oracle(const MixtureCase &c, MethodId method, const ProtocolConfig &config,
                             std::uint64_t seed) {
  const int sources = static_cast<int>(c.sources.size());
  require(sources >= 1, "oracle mode needs the ground-truth sources");
  const auto plan = StftPlan::hann(config.window_length(method), c.sample_rate);
  const auto x = stft(c.mixture, plan);
  const int per = config.components_per_source;
  const auto grouping = consecutive_grouping(sources, per);
  std::vector<Spectrogram> isolated;
  for (const auto &s : c.sources) {
    isolated.push_back(stft(s, plan));
  }
  const auto source_seed = [&](int k) { return mix_seed(seed, 100 + static_cast<std::uint64_t>(k)); };

  MethodOutput out;
  if (is_nmf_family(method)) {
    std::vector<RealMatrix> models;
    for (int k = 0; k < sources; ++k) {
      const auto fit =
          fit_nmf(nmf_input(isolated[static_cast<std::size_t>(k)], config.nmf_divergence),
                  NmfOptions{per, config.nmf_divergence, config.nmf_iterations, source_seed(k)});
      models.push_back(fit.factors.product());
    }
    out.estimates = separate_from_models(x, std::move(models), method, config);
  } else if (method == MethodId::hrnmf) {
    std::vector<HrnmfModel> learned;
    double noise = 0.0;
    for (int k = 0; k < sources; ++k) {
      auto fit = fit_hrnmf(isolated[static_cast<std::size_t>(k)],
                           hrnmf_options(config, per, config.hrnmf_oracle_iterations, source_seed(k)));
      noise += fit.model.noise_var;
      learned.push_back(std::move(fit.model));
    }
    auto model = stack_models(learned, noise);
    if (config.hrnmf_oracle_refit_h && config.hrnmf_refit_iterations > 0) {
      EmOptions em;
      em.freeze_ar = true;
      em.update_w = false;
      auto refit = refine_hrnmf(x, std::move(model), config.hrnmf_refit_iterations, em);
      out.trajectory = refit.loglik;
      model = std::move(refit.model);
    }
    out.estimates = hrnmf_separate(x, model, grouping).signals;
  } else {
    RealMatrix w(x.bins(), sources * per);
    RealMatrix h(sources * per, x.frames());
    for (int k = 0; k < sources; ++k) {
      const auto fit = fit_cnmf(isolated[static_cast<std::size_t>(k)],
                                cnmf_options(config, method, per, source_seed(k)));
      w.middleCols(k * per, per) = fit.model.w;
      h.middleRows(k * per, per) = fit.model.h;
    }
    // Magnitudes stay fixed; only the phases are estimated on the mixture.
    ComplexMatrix phase(x.bins(), x.frames());
    for (Eigen::Index j = 0; j < phase.cols(); ++j) {
      for (Eigen::Index i = 0; i < phase.rows(); ++i) {
        const double r = std::abs(x.data()(i, j));
        phase(i, j) = r > 0.0 ? x.data()(i, j) / r : Complex{1.0};
      }
    }
    CnmfModel model{w, h, std::vector<ComplexMatrix>(static_cast<std::size_t>(sources * per), phase),
                    method == MethodId::cnmf_lr ? config.cnmf_lr_gamma : 0.0};
    CnmfStepOptions step;
    step.sparsity = config.cnmf_sparsity;
    step.update_factors = false;
    auto refined = refine_cnmf(x, std::move(model), config.cnmf_iterations, step);
    out.trajectory = refined.trajectory;
    out.estimates = cnmf_separate(x, refined.model, grouping).signals;
  }
  return out;
}

std::uint64_t run_seed(const ProtocolConfig &config, const MixtureCase &c, MethodId method,
                       int repeat) {
  const std::uint64_t case_key = mix_seed(c.seed, fnv1a(c.id));
  return mix_seed(mix_seed(config.seed, case_key),
                  static_cast<std::uint64_t>(method) * 1000 + static_cast<std::uint64_t>(repeat));
}

namespace {

RunRecord run_one(const MixtureCase &c, MethodId method, Mode mode, const ProtocolConfig &config,
                  const BssEvaluator *evaluator, int repeat) {
  RunRecord r;
  r.dataset = to_string(c.overlap);
  r.case_id = c.id;
  r.method = method;
  r.mode = mode;
  r.repeat = repeat;
  const auto start = std::chrono::steady_clock::now();
  try {
    require(!c.sources.empty(), "case " + c.id + " has no ground-truth sources to score against");
    const std::uint64_t seed = run_seed(config, c, method, repeat);
    const auto output = mode == Mode::blind
                            ? separate_blind(c.mixture, c.sample_rate,
                                             static_cast<int>(c.sources.size()), method, config, seed)
                            : separate_oracle(c, method, config, seed);
    r.trajectory = output.trajectory;
    if (evaluator != nullptr) {
      r.scores = evaluator->scores(output.estimates);
    } else {
      r.scores = compute_scores(output.estimates, c.sources, config.filter_length);
    }
    r.ok = true;
  } catch (const std::exception &e) {
    r.ok = false;
    r.error = e.what();
  }
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

} // namespace

RunRecord run_blind(const MixtureCase &c, MethodId method, const ProtocolConfig &config,
                    const BssEvaluator *evaluator, int repeat) {
  return run_one(c, method, Mode::blind, config, evaluator, repeat);
}

RunRecord run_oracle(const MixtureCase &c, MethodId method, const ProtocolConfig &config,
                     const BssEvaluator *evaluator, int repeat) {
  return run_one(c, method, Mode::oracle, config, evaluator, repeat);
}

namespace {

std::vector<RunRecord> run_case(const MixtureCase &c, const ProtocolConfig &config) {
  std::vector<RunRecord> out;
  std::optional<BssEvaluator> evaluator;
  std::string setup_error;
  try {
    require(!c.sources.empty(), "case " + c.id + " has no ground-truth sources to score against");
    evaluator.emplace(c.sources, config.filter_length);
  } catch (const std::exception &e) {
    setup_error = e.what();
  }
  for (auto method : config.methods) {
    for (auto mode : config.modes) {
      for (int rep = 0; rep < config.repeats_per_case; ++rep) {
        if (!evaluator) {
          RunRecord r;
          r.dataset = to_string(c.overlap);
          r.case_id = c.id;
          r.method = method;
          r.mode = mode;
          r.repeat = rep;
          r.error = setup_error;
          out.push_back(std::move(r));
          continue;
        }
        out.push_back(run_one(c, method, mode, config, &*evaluator, rep));
      }
    }
  }
  return out;
}

} // namespace

std::vector<RunRecord> run_benchmark(const std::vector<MixtureCase> &cases,
                                     const ProtocolConfig &config) {
  std::vector<std::vector<RunRecord>> per_case(cases.size());
  const int n = static_cast<int>(cases.size());
  const int threads = config.threads;
  // run_case never throws: failures become records.
#pragma omp parallel for schedule(dynamic) num_threads(threads > 0 ? threads : omp_get_max_threads())
  for (int i = 0; i < n; ++i) {
    per_case[static_cast<std::size_t>(i)] = run_case(cases[static_cast<std::size_t>(i)], config);
  }
  std::vector<RunRecord> out;
  for (auto &v : per_case) {
    std::move(v.begin(), v.end(), std::back_inserter(out));
  }
  return out;
}

double quantile(std::vector<double> values, double p) {
  require(!values.empty(), "quantile of an empty set");
  require(p >= 0.0 && p <= 1.0, "quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<SummaryRow> aggregate_stats(const std::vector<RunRecord> &records) {
  require(!records.empty(), "aggregate_stats: no results");
  using Key = std::tuple<std::string, int, int, std::size_t>;
  struct Acc {
    std::vector<double> values;
    int failures = 0;
    std::vector<double> times;
  };
  std::map<Key, Acc> groups;
  for (const auto &r : records) {
    for (std::size_t m = 0; m < kMetrics.size(); ++m) {
      auto &acc = groups[{r.dataset, static_cast<int>(r.method), static_cast<int>(r.mode), m}];
      acc.times.push_back(r.wall_seconds);
      if (!r.ok) {
        ++acc.failures;
        continue;
      }
      const auto &v = metric_values(r.scores, m);
      acc.values.insert(acc.values.end(), v.begin(), v.end());
    }
  }
  std::vector<SummaryRow> rows;
  for (auto &[key, acc] : groups) {
    SummaryRow row;
    row.dataset = std::get<0>(key);
    row.method = static_cast<MethodId>(std::get<1>(key));
    row.mode = static_cast<Mode>(std::get<2>(key));
    row.metric = kMetrics[std::get<3>(key)];
    row.count = static_cast<int>(acc.values.size());
    row.failures = acc.failures;
    // Sorting first makes the time mean independent of record order.
    std::sort(acc.times.begin(), acc.times.end());
    row.mean_wall_seconds = mean_of(acc.times);
    if (!acc.values.empty()) {
      row.min = quantile(acc.values, 0.0);
      row.q1 = quantile(acc.values, 0.25);
      row.median = quantile(acc.values, 0.5);
      row.q3 = quantile(acc.values, 0.75);
      row.max = quantile(acc.values, 1.0);
    } else {
      row.min = row.q1 = row.median = row.q3 = row.max = std::nan("");
    }
    rows.push_back(row);
  }
  return rows;
}

const SummaryRow *find_row(const std::vector<SummaryRow> &rows, const std::string &dataset,
                           MethodId method, Mode mode, const std::string &metric) {
  for (const auto &r : rows) {
    if (r.dataset == dataset && r.method == method && r.mode == mode && r.metric == metric) {
      return &r;
    }
  }
  return nullptr;
}

InitStudyReport init_study(const std::vector<MixtureCase> &cases, const ProtocolConfig &config,
                           Mode mode) {
  require(!cases.empty(), "init_study: no cases");
  InitStudyReport report;
  for (auto init : {HrnmfInit::random, HrnmfInit::is_nmf, HrnmfInit::kl_nmf}) {
    ProtocolConfig cfg = config;
    cfg.hrnmf_init = init;
    std::vector<RunRecord> records(cases.size());
    const int n = static_cast<int>(cases.size());
    const int threads = config.threads;
#pragma omp parallel for schedule(dynamic) num_threads(threads > 0 ? threads : omp_get_max_threads())
    for (int i = 0; i < n; ++i) {
      const auto &c = cases[static_cast<std::size_t>(i)];
      records[static_cast<std::size_t>(i)] = mode == Mode::oracle
                                                 ? run_oracle(c, MethodId::hrnmf, cfg)
                                                 : run_blind(c, MethodId::hrnmf, cfg);
    }
    InitStudyRow row;
    row.init = init;
    std::array<std::vector<double>, 3> pooled;
    std::vector<double> times;
    for (const auto &r : records) {
      times.push_back(r.wall_seconds);
      if (!r.ok) {
        ++row.failures;
        continue;
      }
      for (std::size_t m = 0; m < 3; ++m) {
        const auto &v = metric_values(r.scores, m);
        pooled[m].insert(pooled[m].end(), v.begin(), v.end());
      }
    }
    row.count = static_cast<int>(pooled[0].size());
    const auto med = [](const std::vector<double> &v) {
      return v.empty() ? std::nan("") : quantile(v, 0.5);
    };
    row.sdr = med(pooled[0]);
    row.sir = med(pooled[1]);
    row.sar = med(pooled[2]);
    row.mean_seconds = mean_of(times);
    report.rows.push_back(row);
    std::move(records.begin(), records.end(), std::back_inserter(report.records));
  }
  return report;
}

namespace {

std::ofstream open_out(const std::filesystem::path &path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw InvalidArgument("cannot write " + path.string());
  }
  return out;
}

std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\n") == std::string::npos) {
    return s;
  }
  std::string q = "\"";
  for (char ch : s) {
    q += ch == '"' ? std::string("\"\"") : std::string(1, ch == '\n' ? ' ' : ch);
  }
  return q + "\"";
}

std::string join(const std::vector<double> &v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += (i ? ";" : "") + format_double(v[i]);
  }
  return s;
}

std::string join(const std::vector<int> &v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += (i ? ";" : "") + std::to_string(v[i]);
  }
  return s;
}

std::string cell(const SummaryRow *r) {
  if (r == nullptr || r->count == 0) {
    return "n/a";
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.2f [%.2f, %.2f]", r->median, r->q1, r->q3);
  return buf;
}

} // namespace

void write_results_csv(const std::filesystem::path &path, const std::vector<RunRecord> &records) {
  auto out = open_out(path);
  out << "dataset,case,method,mode,repeat,metric,mean,per_source,permutation,status\n";
  for (const auto &r : records) {
    for (std::size_t m = 0; m < kMetrics.size(); ++m) {
      out << csv_field(r.dataset) << ',' << csv_field(r.case_id) << ',' << to_string(r.method)
          << ',' << to_string(r.mode) << ',' << r.repeat << ',' << kMetrics[m] << ',';
      if (r.ok) {
        const auto &v = metric_values(r.scores, m);
        out << format_double(mean_of(v)) << ',' << join(v) << ',' << join(r.scores.permutation)
            << ',' << (r.scores.regularized ? "ok-ridge" : "ok") << '\n';
      } else {
        out << ",,," << csv_field("failed: " + r.error) << '\n';
      }
    }
  }
}

void write_timings_csv(const std::filesystem::path &path, const std::vector<RunRecord> &records) {
  auto out = open_out(path);
  out << "dataset,case,method,mode,repeat,wall_seconds,status\n";
  for (const auto &r : records) {
    out << csv_field(r.dataset) << ',' << csv_field(r.case_id) << ',' << to_string(r.method) << ','
        << to_string(r.mode) << ',' << r.repeat << ',' << format_double(r.wall_seconds) << ','
        << (r.ok ? "ok" : "failed") << '\n';
  }
}

void write_summary_csv(const std::filesystem::path &path, const std::vector<SummaryRow> &rows) {
  auto out = open_out(path);
  out << "dataset,method,mode,metric,count,failures,min,q1,median,q3,max,mean_wall_seconds\n";
  for (const auto &r : rows) {
    out << csv_field(r.dataset) << ',' << to_string(r.method) << ',' << to_string(r.mode) << ','
        << r.metric << ',' << r.count << ',' << r.failures << ',' << format_double(r.min) << ','
        << format_double(r.q1) << ',' << format_double(r.median) << ',' << format_double(r.q3)
        << ',' << format_double(r.max) << ',' << format_double(r.mean_wall_seconds) << '\n';
  }
}

void write_summary_md(const std::filesystem::path &path, const std::vector<SummaryRow> &rows,
                      const ProtocolConfig &config) {
  auto out = open_out(path);
  out << "# Separation benchmark\n\n";
  out << "Seed " << config.seed << "; windows " << config.nmf_window << " (NMF family) / "
      << config.complex_window << " (CNMF, HRNMF), hop = window/4; BSS Eval filter length "
      << config.filter_length << ".\n\n";
  for (const auto &w : config.warnings) {
    out << "> Warning: " << w << "\n\n";
  }
  out << "Cells: median [Q1, Q3] in dB over all sources of all cases.\n";
  std::vector<std::string> datasets;
  for (const auto &r : rows) {
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) {
      datasets.push_back(r.dataset);
    }
  }
  for (const auto &d : datasets) {
    for (auto mode : config.modes) {
      out << "\n## Dataset `" << d << "`, " << to_string(mode) << "\n\n";
      out << "| Method | SDR | SIR | SAR | n | failed | mean time (s) |\n";
      out << "|---|---|---|---|---|---|---|\n";
      for (auto method : config.methods) {
        const auto *sdr = find_row(rows, d, method, mode, "SDR");
        if (sdr == nullptr) {
          continue;
        }
        char time[32];
        std::snprintf(time, sizeof time, "%.3f", sdr->mean_wall_seconds);
        out << "| " << to_string(method) << " | " << cell(sdr) << " | "
            << cell(find_row(rows, d, method, mode, "SIR")) << " | "
            << cell(find_row(rows, d, method, mode, "SAR")) << " | " << sdr->count << " | "
            << sdr->failures << " | " << time << " |\n";
      }
    }
  }
}

std::string format_init_study(const InitStudyReport &report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-6s %8s %8s %8s %10s\n", "Init", "Algo", "SDR", "SIR",
                "SAR", "Time (s)");
  out << line;
  for (const auto &r : report.rows) {
    std::snprintf(line, sizeof line, "%-8s %-6s %8.2f %8.2f %8.2f %10.3f\n",
                  to_string(r.init).c_str(), r.algorithm.c_str(), r.sdr, r.sir, r.sar,
                  r.mean_seconds);
    out << line;
  }
  return out.str();
}

void write_init_study(const std::filesystem::path &csv_path, const std::filesystem::path &txt_path,
                      const InitStudyReport &report) {
  {
    auto out = open_out(csv_path);
    out << "init,algorithm,sdr_median,sir_median,sar_median,mean_seconds,count,failures\n";
    for (const auto &r : report.rows) {
      out << to_string(r.init) << ',' << r.algorithm << ',' << format_double(r.sdr) << ','
          << format_double(r.sir) << ',' << format_double(r.sar) << ','
          << format_double(r.mean_seconds) << ',' << r.count << ',' << r.failures << '\n';
    }
  }
  auto out = open_out(txt_path);
  out << format_init_study(report);
}

} // namespace nmfsep
