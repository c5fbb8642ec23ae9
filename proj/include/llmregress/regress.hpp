#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "llmregress/analysis.hpp"
#include "llmregress/datasets.hpp"
#include "llmregress/runner.hpp"

namespace llmregress::regress {

using core::ContentHash;
using core::Label;
using datasets::Dataset;
using datasets::SliceSpec;
using providers::SamplingParams;
using runner::RunRecord;

enum class Metric { ACCURACY, F1, REGRESSION_RATE };

const char* metric_name(Metric metric);
Metric metric_from_name(const std::string& name);

// One slice-level regression test: fails only when the metric drops more
// than `delta` and the drop is statistically significant at `alpha`.
struct RegressionTest {
  std::string name;
  SliceSpec slice;  // empty clause list = whole dataset
  Metric metric = Metric::ACCURACY;
  double delta = 0.05;
  double alpha = 0.05;
  int min_n = 1;
  std::optional<Label> positive;  // F1 positive class; suite default otherwise
};

struct FlakinessConfig {
  double entropy_threshold = 0.069314718055994531;  // 0.1 * ln 2
  double flaky_fraction = 0.2;
  SamplingParams profile = SamplingParams::confidence_profile();
};

struct BaselineSelector {
  std::optional<ContentHash> run_id;
  std::optional<providers::ModelRef> model;
  std::string prompt_id;
  int prompt_version = 0;
};

struct TestSuite {
  std::string suite_id;
  std::string dataset_id;
  BaselineSelector baseline;
  Label positive;
  std::vector<std::string> declared_keys;
  std::optional<FlakinessConfig> flakiness;
  std::vector<RegressionTest> tests;
};

enum class VerdictStatus { PASS, FAIL, INCONCLUSIVE };

const char* verdict_status_name(VerdictStatus status);

struct Verdict {
  std::string test_name;
  VerdictStatus status = VerdictStatus::INCONCLUSIVE;
  bool flaky = false;
  double observed_delta = 0.0;  // metric drop (baseline - candidate), or rate
  double p_value = 1.0;
  int n_effective = 0;
  double delta_threshold = 0.0;  // the test's delta and alpha, echoed back
  double alpha = 0.0;
  std::string explanation;
};

struct SuiteReport {
  std::string suite_id;
  std::vector<Verdict> verdicts;
  int pass = 0;
  int fail = 0;
  int inconclusive = 0;
  int flaky = 0;

  // 0 = all PASS, 1 = any FAIL, 2 = any INCONCLUSIVE without a FAIL.
  int exit_code() const;
};

// Exact two-sided McNemar p-value on the discordant counts: binomial test of
// b successes in b+c trials at p = 1/2. p(0,0) = 1; symmetric in (b,c).
double mcnemar_test(long long discordant_b, long long discordant_c);

// P(X >= k) for X ~ Binomial(n, p), exact summation.
double binomial_upper_tail(long long k, long long n, double p);

// Seeded paired bootstrap p-value for an F1 drop (percentile method,
// H1: baseline F1 > candidate F1). Deterministic for a given seed.
double bootstrap_f1_p(const RunRecord& baseline, const RunRecord& candidate,
                      const Dataset& dataset, const Label& positive,
                      const std::vector<std::string>& slice_ids, int resamples,
                      std::uint64_t seed);

// Evaluates one test over a (baseline, candidate) pair. The flaky flag is set
// independently of the verdict when `candidate_sampling` (the n>=2 probe run)
// puts at least flaky_fraction of slice examples above the entropy threshold.
Verdict evaluate_test(const RegressionTest& test, const RunRecord& baseline,
                      const RunRecord& candidate, const Dataset& dataset,
                      const FlakinessConfig* flakiness = nullptr,
                      const RunRecord* candidate_sampling = nullptr);

// One verdict per test; per-test errors become INCONCLUSIVE verdicts with the
// error text as explanation and never abort the suite.
SuiteReport run_suite(const TestSuite& suite, const RunRecord& baseline,
                      const RunRecord& candidate, const Dataset& dataset,
                      const RunRecord* candidate_sampling = nullptr);

// Smallest n per the two-proportion normal-approximation power formula
// (z_{a/2} sqrt(2 p q) + z_power sqrt(p1 q1 + p2 q2))^2 / drop^2, a
// conservative planning bound for the paired verdicts.
int required_sample_size(double p_baseline, double detectable_drop, double alpha,
                         double power);

TestSuite load_suite(const std::filesystem::path& path);
nlohmann::json suite_report_to_json(const SuiteReport& report);

// One test from its JSON form: {"name", "slice" ("whole_dataset" or clause
// object), "metric", "delta", "alpha", "min_n", optional "positive_label"}.
// `declared_keys` (when given) restricts slice metadata keys.
RegressionTest regression_test_from_json(const nlohmann::json& j,
                                         const std::vector<std::string>* declared_keys);

}  // namespace llmregress::regress
