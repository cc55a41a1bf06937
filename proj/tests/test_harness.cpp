#include "nmfsep/harness.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace nmfsep;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string &name) {
  const auto dir = fs::temp_directory_path() / ("nmfsep_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

DatagenOptions short_cases() {
  DatagenOptions o;
  o.duration = 0.4;
  return o;
}

ProtocolConfig quick_config() {
  ProtocolConfig c;
  c.nmf_iterations = 10;
  c.phase_iterations = 5;
  c.cnmf_iterations = 5;
  c.hrnmf_iterations = 3;
  c.hrnmf_oracle_iterations = 3;
  c.hrnmf_init_iterations = 10;
  c.filter_length = 32;
  return c;
}

RunRecord fake_record(const std::string &dataset, const std::string &id, std::vector<double> sdr) {
  RunRecord r;
  r.dataset = dataset;
  r.case_id = id;
  r.ok = true;
  r.scores.sdr = sdr;
  r.scores.sir = sdr;
  r.scores.sar = sdr;
  r.wall_seconds = 0.5;
  return r;
}

} // namespace

TEST_CASE("quantiles interpolate linearly") {
  const std::vector<double> v{5, 1, 4, 2, 3};
  CHECK(quantile(v, 0.5) == doctest::Approx(3.0));
  CHECK(quantile(v, 0.25) == doctest::Approx(2.0));
  CHECK(quantile(v, 0.75) == doctest::Approx(4.0));
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 5.0);
  CHECK(quantile({1.0, 2.0}, 0.5) == doctest::Approx(1.5));
  CHECK_THROWS_AS(quantile({}, 0.5), InvalidArgument);
  CHECK_THROWS_AS(quantile(v, 1.5), InvalidArgument);
}

TEST_CASE("aggregate: a single value gives equal order statistics") {
  const auto rows = aggregate_stats({fake_record("none", "a", {7.25})});
  REQUIRE(rows.size() == 3);
  for (const auto &r : rows) {
    CHECK(r.count == 1);
    CHECK(r.min == 7.25);
    CHECK(r.q1 == 7.25);
    CHECK(r.median == 7.25);
    CHECK(r.q3 == 7.25);
    CHECK(r.max == 7.25);
    CHECK(r.mean_wall_seconds == 0.5);
  }
}

TEST_CASE("aggregate: pools sources, counts failures, ignores record order") {
  std::vector<RunRecord> records;
  std::mt19937 gen(3);
  std::normal_distribution<double> score(10.0, 4.0);
  for (int i = 0; i < 12; ++i) {
    auto r = fake_record(i % 2 ? "none" : "forced", "c" + std::to_string(i),
                         {score(gen), score(gen)});
    r.method = i % 3 ? MethodId::hrnmf : MethodId::cnmf;
    r.mode = i % 4 < 2 ? Mode::blind : Mode::oracle;
    r.wall_seconds = 0.1 * i;
    records.push_back(r);
  }
  RunRecord failed;
  failed.dataset = "none";
  failed.method = MethodId::hrnmf;
  failed.mode = Mode::blind;
  failed.error = "diverged";
  records.push_back(failed);

  const auto rows = aggregate_stats(records);
  const auto *row = find_row(rows, "none", MethodId::hrnmf, Mode::blind, "SDR");
  REQUIRE(row != nullptr);
  CHECK(row->failures == 1);
  CHECK(row->count % 2 == 0);

  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(records.begin(), records.end(), gen);
    const auto shuffled = aggregate_stats(records);
    REQUIRE(shuffled.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(shuffled[i].dataset == rows[i].dataset);
      CHECK(shuffled[i].metric == rows[i].metric);
      CHECK(shuffled[i].median == rows[i].median);
      CHECK(shuffled[i].q1 == rows[i].q1);
      CHECK(shuffled[i].q3 == rows[i].q3);
      CHECK(shuffled[i].mean_wall_seconds == rows[i].mean_wall_seconds);
    }
  }
}

TEST_CASE("config: defaults, parsing and unknown keys") {
  const auto defaults = parse_config("{}");
  CHECK(defaults.nmf_window == 1024);
  CHECK(defaults.complex_window == 512);
  CHECK(defaults.nmf_iterations == 30);
  CHECK(defaults.cnmf_iterations == 30);
  CHECK(defaults.phase_iterations == 50);
  CHECK(defaults.hrnmf_iterations == 30);
  CHECK(defaults.hrnmf_oracle_iterations == 10);
  CHECK(defaults.hrnmf_init == HrnmfInit::kl_nmf);
  CHECK(defaults.hrnmf_order == 1);
  CHECK(defaults.methods.size() == 6);
  CHECK(defaults.modes.size() == 2);
  CHECK(defaults.warnings.empty());
  CHECK(defaults.window_length(MethodId::nmf_gl) == 1024);
  CHECK(defaults.window_length(MethodId::hrnmf) == 512);

  const auto c = parse_config(R"({
    "seed": 9, "methods": ["hrnmf", "NMF-Wiener"], "modes": ["oracle"],
    "iterations": {"hrnmf": 12, "phase": 20},
    "hrnmf": {"init": "ISNMF", "order": 2},
    "dataset": {"cases_per_class": 4, "classes": ["forced"], "snr_db": 40}
  })");
  CHECK(c.seed == 9);
  CHECK(c.methods == std::vector<MethodId>{MethodId::hrnmf, MethodId::nmf_wiener});
  CHECK(c.modes == std::vector<Mode>{Mode::oracle});
  CHECK(c.hrnmf_iterations == 12);
  CHECK(c.phase_iterations == 20);
  CHECK(c.hrnmf_init == HrnmfInit::is_nmf);
  CHECK(c.hrnmf_order == 2);
  CHECK(c.dataset.cases_per_class == 4);
  CHECK(c.dataset.classes == std::vector<OverlapClass>{OverlapClass::forced});
  CHECK(c.dataset.generator.snr_db == 40.0);

  CHECK_THROWS_AS(parse_config(R"({"sede": 1})"), InvalidArgument);
  CHECK_THROWS_AS(parse_config(R"({"hrnmf": {"inti": "random"}})"), InvalidArgument);
  CHECK_THROWS_AS(parse_config(R"({"methods": ["PCA"]})"), InvalidArgument);
  CHECK_THROWS_AS(parse_config(R"({"seed": "x"})"), InvalidArgument);
  CHECK_THROWS_AS(parse_config("{"), InvalidArgument);
  CHECK_THROWS_AS(parse_config(R"({"iterations": {"nmf": 0}})"), InvalidArgument);
}

TEST_CASE("config: fairness rule needs an explicit override") {
  CHECK_THROWS_AS(parse_config(R"({"windows": {"nmf": 512}})"), InvalidArgument);
  const auto c = parse_config(R"({"windows": {"nmf": 512, "override_fairness": true}})");
  CHECK(c.nmf_window == 512);
  REQUIRE(c.warnings.size() == 1);
  CHECK(c.warnings[0].find("fairness") != std::string::npos);
}

TEST_CASE("method, mode and init names round trip") {
  for (auto m : all_methods()) {
    CHECK(method_from_string(to_string(m)) == m);
  }
  CHECK(method_from_string("nmf-wiener") == MethodId::nmf_wiener);
  for (auto m : {Mode::blind, Mode::oracle}) {
    CHECK(mode_from_string(to_string(m)) == m);
  }
  for (auto i : {HrnmfInit::random, HrnmfInit::is_nmf, HrnmfInit::kl_nmf}) {
    CHECK(hrnmf_init_from_string(to_string(i)) == i);
  }
  CHECK_THROWS_AS(mode_from_string("semi"), InvalidArgument);
}

TEST_CASE("benchmark: full grid, fixed order, identical output on rerun") {
  auto config = quick_config();
  config.threads = 2;
  const auto cases = gen_dataset(2, OverlapClass::none, 5, short_cases());
  const auto first = run_benchmark(cases, config);
  REQUIRE(first.size() == cases.size() * 6 * 2);
  std::size_t i = 0;
  for (const auto &c : cases) {
    for (auto m : config.methods) {
      for (auto mode : config.modes) {
        CHECK(first[i].case_id == c.id);
        CHECK(first[i].method == m);
        CHECK(first[i].mode == mode);
        CHECK_MESSAGE(first[i].ok, first[i].error);
        CHECK(first[i].scores.sdr.size() == 2);
        ++i;
      }
    }
  }

  config.threads = 1;
  const auto second = run_benchmark(cases, config);
  const auto dir = scratch_dir("bench_det");
  write_results_csv(dir / "a.csv", first);
  write_results_csv(dir / "b.csv", second);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

  const auto rows = aggregate_stats(first);
  write_summary_csv(dir / "summary.csv", rows);
  write_summary_md(dir / "summary.md", rows, config);
  write_timings_csv(dir / "timings.csv", first);
  const auto md = slurp(dir / "summary.md");
  CHECK(md.find("| HRNMF |") != std::string::npos);
  CHECK(md.find("oracle") != std::string::npos);
  const auto csv = slurp(dir / "a.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(first.size()) * 3);
}

TEST_CASE("benchmark: a failing case is recorded and the run continues") {
  auto config = quick_config();
  config.methods = {MethodId::nmf_wiener};
  config.modes = {Mode::blind};
  auto cases = gen_dataset(1, OverlapClass::none, 2, short_cases());
  auto no_refs = cases[0];
  no_refs.id = "no-refs";
  no_refs.sources.clear();
  auto short_mix = cases[0];
  short_mix.id = "short";
  short_mix.mixture.resize(short_mix.mixture.size() / 2);
  cases.push_back(no_refs);
  cases.push_back(short_mix);

  const auto records = run_benchmark(cases, config);
  REQUIRE(records.size() == 3);
  CHECK(records[0].ok);
  CHECK_FALSE(records[1].ok);
  CHECK(records[1].error.find("no ground-truth") != std::string::npos);
  CHECK_FALSE(records[2].ok);
  CHECK_FALSE(records[2].error.empty());

  const auto rows = aggregate_stats(records);
  const auto *row = find_row(rows, "none", MethodId::nmf_wiener, Mode::blind, "SDR");
  REQUIRE(row != nullptr);
  CHECK(row->failures == 2);
  CHECK(row->count == 2);

  const auto dir = scratch_dir("bench_fail");
  write_results_csv(dir / "results.csv", records);
  const auto csv = slurp(dir / "results.csv");
  CHECK(csv.find("failed: ") != std::string::npos);
}

TEST_CASE("oracle NMF-Wiener separates disjoint harmonic sources") {
  ProtocolConfig config;
  const auto c = gen_harmonic_mixture(OverlapClass::none, 11);
  const auto r = run_oracle(c, MethodId::nmf_wiener, config);
  REQUIRE(r.ok);
  for (double s : r.scores.sdr) {
    CHECK(s > 20.0);
  }
}

TEST_CASE("run seeds depend on case, method and repeat only") {
  ProtocolConfig config;
  MixtureCase a;
  a.id = "none-000";
  a.seed = 1;
  MixtureCase b = a;
  b.id = "none-001";
  CHECK(run_seed(config, a, MethodId::hrnmf, 0) == run_seed(config, a, MethodId::hrnmf, 0));
  CHECK(run_seed(config, a, MethodId::hrnmf, 0) != run_seed(config, b, MethodId::hrnmf, 0));
  CHECK(run_seed(config, a, MethodId::hrnmf, 0) != run_seed(config, a, MethodId::cnmf, 0));
  CHECK(run_seed(config, a, MethodId::hrnmf, 0) != run_seed(config, a, MethodId::hrnmf, 1));
  config.seed = 1;
  CHECK(run_seed(config, a, MethodId::hrnmf, 0) != run_seed(ProtocolConfig{}, a, MethodId::hrnmf, 0));
}

TEST_CASE("init study: three rows in a fixed schema") {
  auto config = quick_config();
  const auto cases = gen_dataset(1, OverlapClass::none, 4, short_cases());
  const auto report = init_study(cases, config);
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].init == HrnmfInit::random);
  CHECK(report.rows[1].init == HrnmfInit::is_nmf);
  CHECK(report.rows[2].init == HrnmfInit::kl_nmf);
  CHECK(report.records.size() == 3);
  for (const auto &r : report.rows) {
    CHECK(r.algorithm == "EM");
    CHECK(r.count == 2);
    CHECK(r.failures == 0);
    CHECK(std::isfinite(r.sdr));
  }
  const auto dir = scratch_dir("init_study");
  write_init_study(dir / "init.csv", dir / "init.txt", report);
  const auto csv = slurp(dir / "init.csv");
  CHECK(csv.rfind("init,algorithm,sdr_median,sir_median,sar_median,mean_seconds", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(slurp(dir / "init.txt") == format_init_study(report));
}
