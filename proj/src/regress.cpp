#include "llmregress/regress.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

namespace llmregress::regress {

namespace {

using nlohmann::json;

std::vector<std::string> slice_ids_in_order(const Dataset& dataset,
                                            const RegressionTest& test) {
  if (test.slice.is_whole_dataset()) {
    return dataset.canonical_ids();
  }
  auto ids = datasets::apply_slice(dataset, test.slice);
  return {ids.begin(), ids.end()};
}

}  // namespace

const char* metric_name(Metric metric) {
  switch (metric) {
    case Metric::ACCURACY: return "accuracy";
    case Metric::F1: return "f1";
    case Metric::REGRESSION_RATE: return "regression_rate";
  }
  return "unknown";
}

Metric metric_from_name(const std::string& name) {
  if (name == "accuracy") return Metric::ACCURACY;
  if (name == "f1") return Metric::F1;
  if (name == "regression_rate") return Metric::REGRESSION_RATE;
  throw Error(ErrorCode::INVALID_ARGUMENT, "unknown metric '" + name + "'");
}

const char* verdict_status_name(VerdictStatus status) {
  switch (status) {
    case VerdictStatus::PASS: return "PASS";
    case VerdictStatus::FAIL: return "FAIL";
    case VerdictStatus::INCONCLUSIVE: return "INCONCLUSIVE";
  }
  return "unknown";
}

int SuiteReport::exit_code() const {
  if (fail > 0) return 1;
  if (inconclusive > 0) return 2;
  return 0;
}

double mcnemar_test(long long discordant_b, long long discordant_c) {
  if (discordant_b < 0 || discordant_c < 0) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "discordant counts must be >= 0");
  }
  const long long n = discordant_b + discordant_c;
  if (n == 0) {
    return 1.0;
  }
  const long long m = std::min(discordant_b, discordant_c);

  double cdf;
  if (n <= 900) {
    // C(n,k)/2^n via the term recurrence; terms grow toward k=m so the sum
    // is numerically benign.
    double term = std::ldexp(1.0, -static_cast<int>(n));
    double sum = term;
    for (long long k = 1; k <= m; ++k) {
      term *= static_cast<double>(n - k + 1) / static_cast<double>(k);
      sum += term;
    }
    cdf = sum;
  } else {
    double sum = 0.0;
    const double log_half_n = static_cast<double>(n) * std::log(2.0);
    for (long long k = 0; k <= m; ++k) {
      sum += std::exp(std::lgamma(static_cast<double>(n) + 1.0) -
                      std::lgamma(static_cast<double>(k) + 1.0) -
                      std::lgamma(static_cast<double>(n - k) + 1.0) - log_half_n);
    }
    cdf = sum;
  }
  return std::min(1.0, 2.0 * cdf);
}

double binomial_upper_tail(long long k, long long n, double p) {
  if (n < 0 || k < 0) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "binomial counts must be >= 0");
  }
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  double sum = 0.0;
  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  for (long long i = k; i <= n; ++i) {
    sum += std::exp(std::lgamma(static_cast<double>(n) + 1.0) -
                    std::lgamma(static_cast<double>(i) + 1.0) -
                    std::lgamma(static_cast<double>(n - i) + 1.0) +
                    static_cast<double>(i) * log_p +
                    static_cast<double>(n - i) * log_q);
  }
  return std::min(1.0, sum);
}

double bootstrap_f1_p(const RunRecord& baseline, const RunRecord& candidate,
                      const Dataset& dataset, const Label& positive,
                      const std::vector<std::string>& slice_ids, int resamples,
                      std::uint64_t seed) {
  if (slice_ids.empty()) {
    throw Error(ErrorCode::EMPTY_SLICE, "bootstrap over an empty slice");
  }
  struct Outcome {
    bool gold_pos;
    bool base_pos;
    bool cand_pos;
  };
  std::vector<Outcome> outcomes;
  outcomes.reserve(slice_ids.size());
  for (const auto& id : slice_ids) {
    const auto& example = dataset.example(id);
    auto base_pred = analysis::point_prediction(baseline, id);
    auto cand_pred = analysis::point_prediction(candidate, id);
    outcomes.push_back(Outcome{example.gold == positive,
                               base_pred && *base_pred == positive,
                               cand_pred && *cand_pred == positive});
  }

  auto f1_of = [](long long tp, long long fp, long long fn) {
    const long long denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  };

  std::mt19937_64 rng(seed);
  const std::size_t n = outcomes.size();
  int not_positive = 0;  // resamples where the drop is <= 0
  for (int r = 0; r < resamples; ++r) {
    long long tp_b = 0, fp_b = 0, fn_b = 0;
    long long tp_c = 0, fp_c = 0, fn_c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Outcome& o = outcomes[rng() % n];
      if (o.base_pos && o.gold_pos) ++tp_b;
      else if (o.base_pos) ++fp_b;
      else if (o.gold_pos) ++fn_b;
      if (o.cand_pos && o.gold_pos) ++tp_c;
      else if (o.cand_pos) ++fp_c;
      else if (o.gold_pos) ++fn_c;
    }
    const double drop = f1_of(tp_b, fp_b, fn_b) - f1_of(tp_c, fp_c, fn_c);
    if (drop <= 0.0) {
      ++not_positive;
    }
  }
  return static_cast<double>(1 + not_positive) / static_cast<double>(resamples + 1);
}

Verdict evaluate_test(const RegressionTest& test, const RunRecord& baseline,
                      const RunRecord& candidate, const Dataset& dataset,
                      const FlakinessConfig* flakiness,
                      const RunRecord* candidate_sampling) {
  if (baseline.config.dataset_digest != dataset.digest() ||
      candidate.config.dataset_digest != dataset.digest()) {
    throw Error(ErrorCode::DATASET_MISMATCH,
                "test '" + test.name + "': runs do not match the dataset digest");
  }

  Verdict verdict;
  verdict.test_name = test.name;
  verdict.delta_threshold = test.delta;
  verdict.alpha = test.alpha;

  auto ids_vec = slice_ids_in_order(dataset, test);
  if (ids_vec.empty()) {
    throw Error(ErrorCode::EMPTY_SLICE, "test '" + test.name + "' selects no examples");
  }
  verdict.n_effective = static_cast<int>(ids_vec.size());

  std::optional<std::set<std::string>> ids;
  if (!test.slice.is_whole_dataset()) {
    ids = std::set<std::string>(ids_vec.begin(), ids_vec.end());
  }

  const Label positive =
      test.positive ? *test.positive : dataset.label_set().at(0);

  auto flips = analysis::classify_flips(baseline, candidate, dataset);
  auto flip_counts = analysis::count_flips(flips, ids);

  switch (test.metric) {
    case Metric::ACCURACY: {
      const double acc_b = analysis::accuracy(baseline, dataset, ids);
      const double acc_c = analysis::accuracy(candidate, dataset, ids);
      verdict.observed_delta = acc_b - acc_c;
      verdict.p_value = mcnemar_test(flip_counts.regressed, flip_counts.improved);
      break;
    }
    case Metric::F1: {
      const double f1_b = analysis::f1(baseline, dataset, positive, ids).value;
      const double f1_c = analysis::f1(candidate, dataset, positive, ids).value;
      verdict.observed_delta = f1_b - f1_c;
      verdict.p_value =
          bootstrap_f1_p(baseline, candidate, dataset, positive, ids_vec, 2000,
                         core::hash64("bootstrap|" + test.name));
      break;
    }
    case Metric::REGRESSION_RATE: {
      const double rate = static_cast<double>(flip_counts.regressed) /
                          static_cast<double>(verdict.n_effective);
      verdict.observed_delta = rate;
      verdict.p_value =
          binomial_upper_tail(flip_counts.regressed, verdict.n_effective, test.delta);
      break;
    }
  }

  if (verdict.n_effective < test.min_n) {
    verdict.status = VerdictStatus::INCONCLUSIVE;
    verdict.explanation = "slice has " + std::to_string(verdict.n_effective) +
                          " examples, below min_n=" + std::to_string(test.min_n);
  } else if (verdict.observed_delta > test.delta && verdict.p_value < test.alpha) {
    verdict.status = VerdictStatus::FAIL;
    verdict.explanation = std::string(metric_name(test.metric)) + " drop " +
                          std::to_string(verdict.observed_delta) + " exceeds " +
                          std::to_string(test.delta) + " with p=" +
                          std::to_string(verdict.p_value);
  } else {
    verdict.status = VerdictStatus::PASS;
    verdict.explanation = "within threshold (drop " +
                          std::to_string(verdict.observed_delta) + ", p=" +
                          std::to_string(verdict.p_value) + ")";
  }

  if (flakiness && candidate_sampling &&
      candidate_sampling->config.params.n_samples >= 2) {
    int covered = 0;
    int noisy = 0;
    for (const auto& id : ids_vec) {
      if (candidate_sampling->samples.count(id) == 0) {
        continue;
      }
      ++covered;
      const double e =
          analysis::entropy(analysis::estimate_distribution(*candidate_sampling, id));
      if (e > flakiness->entropy_threshold) {
        ++noisy;
      }
    }
    if (covered > 0) {
      verdict.flaky = static_cast<double>(noisy) / static_cast<double>(covered) >=
                      flakiness->flaky_fraction;
    }
  }
  return verdict;
}

SuiteReport run_suite(const TestSuite& suite, const RunRecord& baseline,
                      const RunRecord& candidate, const Dataset& dataset,
                      const RunRecord* candidate_sampling) {
  SuiteReport report;
  report.suite_id = suite.suite_id;
  const FlakinessConfig* flakiness =
      suite.flakiness ? &*suite.flakiness : nullptr;
  for (const auto& test_in : suite.tests) {
    RegressionTest test = test_in;
    if (!test.positive) {
      test.positive = suite.positive;
    }
    Verdict verdict;
    try {
      verdict = evaluate_test(test, baseline, candidate, dataset, flakiness,
                              candidate_sampling);
    } catch (const Error& ex) {
      verdict.test_name = test.name;
      verdict.status = VerdictStatus::INCONCLUSIVE;
      verdict.delta_threshold = test.delta;
      verdict.alpha = test.alpha;
      verdict.explanation = ex.what();
    }
    switch (verdict.status) {
      case VerdictStatus::PASS: ++report.pass; break;
      case VerdictStatus::FAIL: ++report.fail; break;
      case VerdictStatus::INCONCLUSIVE: ++report.inconclusive; break;
    }
    if (verdict.flaky) {
      ++report.flaky;
    }
    report.verdicts.push_back(std::move(verdict));
  }
  return report;
}

int required_sample_size(double p_baseline, double detectable_drop, double alpha,
                         double power) {
  if (p_baseline <= 0.0 || p_baseline >= 1.0) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "p_baseline must be in (0,1)");
  }
  if (detectable_drop <= 0.0) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "detectable_drop must be > 0");
  }
  if (alpha <= 0.0 || alpha >= 1.0 || power <= 0.0 || power >= 1.0) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "alpha and power must be in (0,1)");
  }
  if (p_baseline - detectable_drop <= 0.0) {
    throw Error(ErrorCode::INFEASIBLE,
                "drop of " + std::to_string(detectable_drop) +
                    " from baseline " + std::to_string(p_baseline) +
                    " leaves no detectable rate");
  }
  const boost::math::normal_distribution<double> normal;
  const double z_alpha = boost::math::quantile(normal, 1.0 - alpha / 2.0);
  const double z_power = boost::math::quantile(normal, power);
  const double p1 = p_baseline;
  const double p2 = p_baseline - detectable_drop;
  const double pbar = (p1 + p2) / 2.0;
  const double qbar = 1.0 - pbar;
  const double numerator = z_alpha * std::sqrt(2.0 * pbar * qbar) +
                           z_power * std::sqrt(p1 * (1.0 - p1) + p2 * (1.0 - p2));
  const double n = (numerator * numerator) / (detectable_drop * detectable_drop);
  return static_cast<int>(std::ceil(n));
}

TestSuite load_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IO_ERROR, "cannot open suite file " + path.string());
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::MALFORMED_RECORD,
                "suite file " + path.string() + " is not valid JSON");
  }

  TestSuite suite;
  suite.suite_id = j.at("suite_id").get<std::string>();
  suite.dataset_id = j.at("dataset_id").get<std::string>();
  suite.positive = Label(j.at("positive_label").get<std::string>());

  if (j.contains("baseline")) {
    const auto& b = j.at("baseline");
    if (b.contains("run_id")) {
      suite.baseline.run_id = ContentHash::parse(b.at("run_id").get<std::string>());
    }
    if (b.contains("model")) {
      suite.baseline.model = providers::ModelRef::from_json(b.at("model"));
      suite.baseline.prompt_id = b.value("prompt_id", "");
      suite.baseline.prompt_version = b.value("prompt_version", 0);
    }
  }

  if (j.contains("metadata_keys")) {
    suite.declared_keys = j.at("metadata_keys").get<std::vector<std::string>>();
  }

  if (j.contains("flakiness")) {
    FlakinessConfig f;
    const auto& fj = j.at("flakiness");
    f.entropy_threshold = fj.value("entropy_threshold", f.entropy_threshold);
    f.flaky_fraction = fj.value("flaky_fraction", f.flaky_fraction);
    if (fj.contains("profile")) {
      f.profile = SamplingParams::from_json(fj.at("profile"));
    }
    suite.flakiness = f;
  }

  std::set<std::string> seen_names;
  for (const auto& tj : j.at("tests")) {
    RegressionTest test = regression_test_from_json(tj, &suite.declared_keys);
    if (!seen_names.insert(test.name).second) {
      throw Error(ErrorCode::INVALID_ARGUMENT,
                  "duplicate test name '" + test.name + "' in suite");
    }
    suite.tests.push_back(std::move(test));
  }
  if (suite.tests.empty()) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "suite has no tests");
  }
  return suite;
}

RegressionTest regression_test_from_json(const nlohmann::json& j,
                                         const std::vector<std::string>* declared_keys) {
  RegressionTest test;
  test.name = j.at("name").get<std::string>();
  const auto& slice = j.at("slice");
  if (slice.is_string() && slice.get<std::string>() == "whole_dataset") {
    test.slice = SliceSpec::whole_dataset(test.name);
  } else {
    json named = slice;
    named["name"] = test.name;
    test.slice = SliceSpec::from_json(named);
    if (declared_keys) {
      for (const auto& clause : test.slice.clauses) {
        if (clause.kind == datasets::SliceClause::Kind::METADATA_EQUALS &&
            std::find(declared_keys->begin(), declared_keys->end(), clause.key) ==
                declared_keys->end()) {
          throw Error(ErrorCode::UNKNOWN_METADATA_KEY,
                      "test '" + test.name + "' uses metadata key '" + clause.key +
                          "' not listed in metadata_keys");
        }
      }
    }
  }
  test.metric = metric_from_name(j.at("metric").get<std::string>());
  test.delta = j.value("delta", 0.05);
  test.alpha = j.value("alpha", 0.05);
  test.min_n = j.value("min_n", 1);
  if (test.min_n < 1) {
    throw Error(ErrorCode::INVALID_ARGUMENT,
                "test '" + test.name + "' min_n must be >= 1");
  }
  if (j.contains("positive_label")) {
    test.positive = Label(j.at("positive_label").get<std::string>());
  }
  return test;
}

nlohmann::json suite_report_to_json(const SuiteReport& report) {
  json verdicts = json::array();
  for (const auto& v : report.verdicts) {
    verdicts.push_back({{"test", v.test_name},
                        {"status", verdict_status_name(v.status)},
                        {"flaky", v.flaky},
                        {"observed_delta", v.observed_delta},
                        {"p_value", v.p_value},
                        {"n_effective", v.n_effective},
                        {"delta_threshold", v.delta_threshold},
                        {"alpha", v.alpha},
                        {"explanation", v.explanation}});
  }
  return json{{"suite_id", report.suite_id},
              {"verdicts", std::move(verdicts)},
              {"summary",
               {{"pass", report.pass},
                {"fail", report.fail},
                {"inconclusive", report.inconclusive},
                {"flaky", report.flaky}}},
              {"exit_code", report.exit_code()}};
}

}  // namespace llmregress::regress
