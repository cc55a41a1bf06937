#pragma once

#include "nmfsep/bss_eval.hpp"
#include "nmfsep/datagen.hpp"
#include "nmfsep/factorization.hpp"
#include "nmfsep/hrnmf.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nmfsep {

enum class MethodId { nmf_wiener, nmf_gl, nmf_lr, cnmf, cnmf_lr, hrnmf };

std::string to_string(MethodId m);
MethodId method_from_string(const std::string &name);
const std::vector<MethodId> &all_methods();

enum class Mode { blind, oracle };

std::string to_string(Mode m);
Mode mode_from_string(const std::string &name);

std::string to_string(HrnmfInit init);
HrnmfInit hrnmf_init_from_string(const std::string &name);

/// Where the benchmark cases come from: a manifest on disk, or synthetic
/// mixtures generated in memory.
struct DatasetSpec {
  std::string manifest;
  int cases_per_class = kDefaultCasesPerClass;
  std::vector<OverlapClass> classes{OverlapClass::none, OverlapClass::forced};
  std::uint64_t seed = 0;
  DatagenOptions generator{};
};

/// Generates or loads the cases described by `spec`.
std::vector<MixtureCase> load_cases(const DatasetSpec &spec);

inline constexpr int kNmfFamilyWindow = 1024;
inline constexpr int kComplexFamilyWindow = 512;

struct ProtocolConfig {
  /// Window of NMF-Wiener / NMF-GL / NMF-LR.
  int nmf_window = kNmfFamilyWindow;
  /// Window of CNMF / CNMF-LR / HRNMF. The two sizes equalize parameter
  /// counts between the families; hop is always window / 4.
  int complex_window = kComplexFamilyWindow;
  /// Must be set to use other window sizes; a warning is recorded.
  bool override_fairness = false;

  int nmf_iterations = 30;
  Divergence nmf_divergence = Divergence::kl;
  int phase_iterations = 50;
  int cnmf_iterations = 30;
  double cnmf_lr_gamma = 1.0;
  double cnmf_sparsity = 0.0;
  int hrnmf_iterations = 30;
  int hrnmf_oracle_iterations = 10;
  int hrnmf_init_iterations = 30;
  HrnmfInit hrnmf_init = HrnmfInit::kl_nmf;
  int hrnmf_order = 1;
  double hrnmf_noise_fraction = 0.01;
  /// Oracle HRNMF: refit activations on the mixture instead of keeping the
  /// per-source parameters fixed.
  bool hrnmf_oracle_refit_h = false;
  int hrnmf_refit_iterations = 10;

  int components_per_source = 1;
  int filter_length = kDefaultFilterLength;
  std::uint64_t seed = 0;
  std::vector<MethodId> methods = all_methods();
  std::vector<Mode> modes{Mode::blind, Mode::oracle};
  int repeats_per_case = 1;
  /// Worker threads for case-level parallelism; 0 keeps the OpenMP default.
  int threads = 0;
  DatasetSpec dataset{};

  /// Messages about overridden defaults, filled by validate().
  std::vector<std::string> warnings;

  int window_length(MethodId m) const;
  /// Checks ranges and the fairness rule; throws InvalidArgument.
  void validate();
};

/// Parses a JSON config. Unknown keys are rejected so typos surface.
ProtocolConfig parse_config(const std::string &json_text);
ProtocolConfig load_config(const std::filesystem::path &path);

struct RunRecord {
  std::string dataset; ///< overlap class name of the case
  std::string case_id;
  MethodId method = MethodId::nmf_wiener;
  Mode mode = Mode::blind;
  int repeat = 0;
  bool ok = false;
  std::string error;
  SeparationScores scores;
  double wall_seconds = 0.0;
  /// Objective / log-likelihood values of the main fit.
  std::vector<double> trajectory;
};

/// Separated sources for one method, before scoring.
struct MethodOutput {
  std::vector<Signal> estimates;
  std::vector<double> trajectory;
};

/// Fits `method` on the mixture alone and separates it.
MethodOutput separate_blind(const Signal &mixture, double sample_rate, int sources,
                            MethodId method, const ProtocolConfig &config, std::uint64_t seed);

/// Learns per-source parameters from the isolated sources, then separates
/// the mixture with the assembled model.
MethodOutput separate_oracle(const MixtureCase &c, MethodId method, const ProtocolConfig &config,
                             std::uint64_t seed);

/// Seed of one run, derived from the master seed and the case identity.
std::uint64_t run_seed(const ProtocolConfig &config, const MixtureCase &c, MethodId method,
                       int repeat);

RunRecord run_blind(const MixtureCase &c, MethodId method, const ProtocolConfig &config,
                    const BssEvaluator *evaluator = nullptr, int repeat = 0);
RunRecord run_oracle(const MixtureCase &c, MethodId method, const ProtocolConfig &config,
                     const BssEvaluator *evaluator = nullptr, int repeat = 0);

/// Full method x mode x repeat grid over every case. Cases run
/// concurrently; the record order is fixed (case, method, mode, repeat).
std::vector<RunRecord> run_benchmark(const std::vector<MixtureCase> &cases,
                                     const ProtocolConfig &config);

struct SummaryRow {
  std::string dataset;
  MethodId method = MethodId::nmf_wiener;
  Mode mode = Mode::blind;
  std::string metric; ///< SDR, SIR or SAR
  int count = 0;      ///< pooled per-source values
  int failures = 0;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  double mean_wall_seconds = 0.0;
};

/// Linear-interpolation quantile of unsorted values, p in [0, 1].
double quantile(std::vector<double> values, double p);

/// Order statistics per (dataset, method, mode, metric) over the per-source
/// scores of successful runs. Independent of the record order.
std::vector<SummaryRow> aggregate_stats(const std::vector<RunRecord> &records);

const SummaryRow *find_row(const std::vector<SummaryRow> &rows, const std::string &dataset,
                           MethodId method, Mode mode, const std::string &metric);

struct InitStudyRow {
  HrnmfInit init = HrnmfInit::random;
  std::string algorithm = "EM";
  double sdr = 0.0, sir = 0.0, sar = 0.0; ///< medians over pooled sources
  double mean_seconds = 0.0;
  int count = 0;
  int failures = 0;
};

struct InitStudyReport {
  std::vector<InitStudyRow> rows; ///< random, ISNMF, KLNMF
  std::vector<RunRecord> records;
};

/// HRNMF separation of every case under each initialization, oracle
/// (default) or blind.
InitStudyReport init_study(const std::vector<MixtureCase> &cases, const ProtocolConfig &config,
                           Mode mode = Mode::oracle);

/// results.csv: one row per (case, method, mode, repeat, metric). Holds no
/// timing, so identical inputs give identical bytes.
void write_results_csv(const std::filesystem::path &path, const std::vector<RunRecord> &records);
/// timings.csv: wall time and status per run.
void write_timings_csv(const std::filesystem::path &path, const std::vector<RunRecord> &records);
void write_summary_csv(const std::filesystem::path &path, const std::vector<SummaryRow> &rows);
void write_summary_md(const std::filesystem::path &path, const std::vector<SummaryRow> &rows,
                      const ProtocolConfig &config);
void write_init_study(const std::filesystem::path &csv_path, const std::filesystem::path &txt_path,
                      const InitStudyReport &report);
/// Fixed-width text rendering of the init-study table.
std::string format_init_study(const InitStudyReport &report);

} // namespace nmfsep
