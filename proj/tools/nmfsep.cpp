// Command-line front end: dataset generation, single-file separation, the
// benchmark grid, scoring of existing estimates and the HRNMF init study.
#include "nmfsep/harness.hpp"
#include "nmfsep/wav.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace nmfsep;

namespace {

std::vector<std::string> split_list(const std::string &s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

// Shared config options; flags override values from the config file.
struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string methods;
  std::string modes;
  std::string dataset;
  std::optional<int> cases_per_class;
  std::optional<int> threads;

  void add(CLI::App *app, bool grid) {
    app->add_option("-c,--config", config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "master seed (dataset generation and fits)");
    app->add_option("-o,--out-dir", out_dir, "output directory")->capture_default_str();
    app->add_option("--dataset", dataset, "dataset manifest.json (default: generate in memory)");
    app->add_option("--cases-per-class", cases_per_class, "generated mixtures per overlap class");
    app->add_option("--threads", threads, "worker threads (0: OpenMP default)");
    if (grid) {
      app->add_option("--methods", methods,
                      "comma list: NMF-Wiener,NMF-GL,NMF-LR,CNMF,CNMF-LR,HRNMF");
      app->add_option("--modes", modes, "comma list: blind,oracle");
    }
  }

  ProtocolConfig resolve() const {
    ProtocolConfig c = config.empty() ? parse_config("{}") : load_config(config);
    if (seed) {
      c.seed = *seed;
      c.dataset.seed = *seed;
    }
    if (!methods.empty()) {
      c.methods.clear();
      for (const auto &m : split_list(methods)) {
        c.methods.push_back(method_from_string(m));
      }
    }
    if (!modes.empty()) {
      c.modes.clear();
      for (const auto &m : split_list(modes)) {
        c.modes.push_back(mode_from_string(m));
      }
    }
    if (!dataset.empty()) {
      c.dataset.manifest = dataset;
    }
    if (cases_per_class) {
      c.dataset.cases_per_class = *cases_per_class;
    }
    if (threads) {
      c.threads = *threads;
    }
    c.validate();
    return c;
  }
};

void print_warnings(const ProtocolConfig &c) {
  for (const auto &w : c.warnings) {
    std::cerr << "warning: " << w << '\n';
  }
}

int cmd_datagen(const fs::path &out_dir, std::uint64_t seed, int per_class,
                const std::string &classes, bool vibrato, double snr_db) {
  DatagenOptions opts;
  opts.vibrato = vibrato;
  opts.snr_db = snr_db;
  std::vector<MixtureCase> cases;
  for (const auto &name : split_list(classes)) {
    auto part = gen_dataset(per_class, overlap_class_from_string(name), seed, opts);
    std::move(part.begin(), part.end(), std::back_inserter(cases));
  }
  const auto manifest = write_dataset(out_dir, cases, seed);
  std::cout << "wrote " << cases.size() << " mixtures, manifest " << manifest.string() << '\n';
  return 0;
}

int cmd_separate(const CommonArgs &common, const std::string &input, const std::string &method,
                 int sources) {
  const auto config = common.resolve();
  print_warnings(config);
  const auto wav = wav_read(input);
  const auto id = method_from_string(method);
  const auto out = separate_blind(wav.samples, wav.sample_rate, sources, id, config, config.seed);
  fs::create_directories(common.out_dir);
  for (std::size_t k = 0; k < out.estimates.size(); ++k) {
    const auto path = fs::path(common.out_dir) / ("source_" + std::to_string(k) + ".wav");
    const auto clipped = wav_write(path, out.estimates[k], wav.sample_rate, wav.format);
    std::cout << path.string() << '\n';
    if (clipped > 0) {
      std::cerr << "warning: " << clipped << " samples clipped in " << path.string() << '\n';
    }
  }
  return 0;
}

int cmd_bench(const CommonArgs &common) {
  const auto config = common.resolve();
  print_warnings(config);
  const auto cases = load_cases(config.dataset);
  std::cerr << "running " << cases.size() << " cases x " << config.methods.size() << " methods x "
            << config.modes.size() << " modes\n";
  const auto records = run_benchmark(cases, config);
  const auto rows = aggregate_stats(records);
  const fs::path dir = common.out_dir;
  write_results_csv(dir / "results.csv", records);
  write_timings_csv(dir / "timings.csv", records);
  write_summary_csv(dir / "summary.csv", rows);
  write_summary_md(dir / "summary.md", rows, config);
  int failures = 0;
  for (const auto &r : records) {
    if (!r.ok) {
      ++failures;
      std::cerr << "failed: " << r.case_id << ' ' << to_string(r.method) << ' '
                << to_string(r.mode) << ": " << r.error << '\n';
    }
  }
  std::cout << "wrote " << (dir / "results.csv").string() << ", summary.csv, summary.md, timings.csv ("
            << failures << " failed runs)\n";
  return 0;
}

int cmd_eval(const std::vector<std::string> &refs, const std::vector<std::string> &ests,
             int filter_length) {
  if (refs.size() != ests.size()) {
    throw InvalidArgument("need as many estimates as references");
  }
  std::vector<Signal> reference, estimate;
  for (const auto &p : refs) {
    reference.push_back(wav_read(p).samples);
  }
  for (const auto &p : ests) {
    estimate.push_back(wav_read(p).samples);
  }
  const auto s = compute_scores(estimate, reference, filter_length);
  std::printf("reference,estimate,SDR,SIR,SAR\n");
  for (std::size_t j = 0; j < reference.size(); ++j) {
    std::size_t est = 0;
    for (std::size_t i = 0; i < s.permutation.size(); ++i) {
      if (static_cast<std::size_t>(s.permutation[i]) == j) {
        est = i;
      }
    }
    std::printf("%s,%s,%.3f,%.3f,%.3f\n", refs[j].c_str(), ests[est].c_str(), s.sdr[j], s.sir[j],
                s.sar[j]);
  }
  if (s.regularized) {
    std::cerr << "warning: reference Gram matrix was ill-conditioned; a ridge was added\n";
  }
  return 0;
}

int cmd_init_study(CommonArgs common, const std::string &mode) {
  if (!common.cases_per_class) {
    common.cases_per_class = 10;
  }
  auto config = common.resolve();
  if (common.config.empty()) {
    config.dataset.classes = {OverlapClass::none};
  }
  print_warnings(config);
  const auto cases = load_cases(config.dataset);
  const auto report = init_study(cases, config, mode_from_string(mode));
  const fs::path dir = common.out_dir;
  write_init_study(dir / "init_study.csv", dir / "init_study.txt", report);
  std::cout << format_init_study(report);
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"NMF-family source separation benchmark"};
  app.require_subcommand(1);

  auto *datagen = app.add_subcommand("datagen", "generate synthetic harmonic mixtures");
  std::string dg_out = "dataset";
  std::uint64_t dg_seed = 0;
  int dg_cases = kDefaultCasesPerClass;
  std::string dg_classes = "none,forced";
  bool dg_vibrato = false;
  double dg_snr = 60.0;
  datagen->add_option("-o,--out-dir", dg_out, "output directory")->capture_default_str();
  datagen->add_option("--seed", dg_seed, "master seed")->capture_default_str();
  datagen->add_option("--cases-per-class", dg_cases, "mixtures per class")->capture_default_str();
  datagen->add_option("--classes", dg_classes, "comma list of none,forced")->capture_default_str();
  datagen->add_flag("--vibrato", dg_vibrato, "add sinusoidal frequency modulation");
  datagen->add_option("--snr", dg_snr, "mixture SNR in dB")->capture_default_str();

  auto *separate = app.add_subcommand("separate", "blind separation of one WAV file");
  CommonArgs sep_args;
  sep_args.add(separate, false);
  std::string sep_input;
  std::string sep_method = "HRNMF";
  int sep_sources = 2;
  separate->add_option("input", sep_input, "mono WAV mixture")->required()->check(CLI::ExistingFile);
  separate->add_option("-m,--method", sep_method, "separation method")->capture_default_str();
  separate->add_option("-k,--sources", sep_sources, "number of sources")->capture_default_str();

  auto *bench = app.add_subcommand("bench", "run the method x case x mode grid");
  CommonArgs bench_args;
  bench_args.add(bench, true);

  auto *eval = app.add_subcommand("eval", "score estimated WAVs against reference WAVs");
  std::vector<std::string> eval_refs, eval_ests;
  int eval_filter = kDefaultFilterLength;
  eval->add_option("-r,--reference", eval_refs, "reference WAV files")->required();
  eval->add_option("-e,--estimate", eval_ests, "estimate WAV files")->required();
  eval->add_option("--filter-length", eval_filter, "distortion filter taps")->capture_default_str();

  auto *study = app.add_subcommand("init-study", "oracle HRNMF under each initialization");
  CommonArgs study_args;
  study_args.add(study, false);
  std::string study_mode = "oracle";
  study->add_option("--mode", study_mode, "blind or oracle")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*datagen) {
      return cmd_datagen(dg_out, dg_seed, dg_cases, dg_classes, dg_vibrato, dg_snr);
    }
    if (*separate) {
      return cmd_separate(sep_args, sep_input, sep_method, sep_sources);
    }
    if (*bench) {
      return cmd_bench(bench_args);
    }
    if (*eval) {
      return cmd_eval(eval_refs, eval_ests, eval_filter);
    }
    if (*study) {
      return cmd_init_study(study_args, study_mode);
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
