// Acceptance gate: ten end-to-end criteria, one [PASS]/[FAIL] line each.
// Exits nonzero if any criterion fails. Each criterion also enforces its
// runtime budget.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "llmregress/analysis.hpp"
#include "llmregress/cli.hpp"
#include "llmregress/driftsim.hpp"
#include "llmregress/prompts.hpp"
#include "llmregress/providers.hpp"
#include "llmregress/regress.hpp"
#include "llmregress/runner.hpp"
#include "../support/fixtures.hpp"

using namespace llmregress;
using nlohmann::json;

namespace {

int g_failures = 0;

struct Criterion {
  int number;
  const char* title;
  double budget_seconds;
  std::function<void(std::ostringstream&)> body;
};

void run_criterion(const Criterion& criterion) {
  std::ostringstream detail;
  bool ok = true;
  std::string error;
  const auto start = std::chrono::steady_clock::now();
  try {
    criterion.body(detail);
  } catch (const std::exception& ex) {
    ok = false;
    error = ex.what();
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (ok && elapsed > criterion.budget_seconds) {
    ok = false;
    error = "exceeded runtime budget";
  }
  if (!ok) {
    ++g_failures;
  }
  std::printf("[%s] criterion %d: %s (%.2fs%s)%s%s\n", ok ? "PASS" : "FAIL",
              criterion.number, criterion.title, elapsed,
              detail.str().empty() ? "" : ("; " + detail.str()).c_str(),
              error.empty() ? "" : " — ", error.c_str());
}

void require(bool condition, const std::string& message) {
  if (!condition) {
    throw std::runtime_error(message);
  }
}

// ---------------------------------------------------------------------------
// 1. entropy oracle

void criterion_entropy(std::ostringstream& detail) {
  std::mt19937_64 rng(20260810);
  const double ln2 = std::log(2.0);

  analysis::LabelDistribution exact;
  exact.n = 20;
  exact.label_names = {"a", "b"};
  exact.counts = {20, 0};
  exact.probabilities = {1.0, 0.0};
  require(analysis::entropy(exact) == 0.0, "entropy({1,0}) must be exactly 0");
  exact.counts = {10, 10};
  exact.probabilities = {0.5, 0.5};
  require(std::abs(analysis::entropy(exact) - ln2) < 1e-15,
          "entropy({.5,.5}) must equal ln 2");

  double max_error = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 4);  // 2..5 labels
    std::vector<int> counts(k, 0);
    for (int i = 0; i < 20; ++i) {
      ++counts[rng() % k];
    }
    analysis::LabelDistribution dist;
    dist.n = 20;
    for (int i = 0; i < k; ++i) {
      dist.label_names.push_back("l" + std::to_string(i));
      dist.counts.push_back(counts[i]);
      dist.probabilities.push_back(counts[i] / 20.0);
    }
    // independent direct evaluation of sum(-p ln p)
    double direct = 0.0;
    for (int c : counts) {
      if (c > 0) {
        const double p = static_cast<double>(c) / 20.0;
        direct -= p * std::log(p);
      }
    }
    max_error = std::max(max_error, std::abs(analysis::entropy(dist) - direct));
  }
  require(max_error < 1e-12, "entropy deviates from the direct sum");
  detail << "1000 vectors, max |err| " << max_error;
}

// ---------------------------------------------------------------------------
// 2. flip identity

void criterion_flip_identity(std::ostringstream& detail) {
  std::mt19937_64 rng(77);
  auto labels = core::LabelSet::from_names({"pos", "neg"});
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 199);  // up to 200 examples
    std::vector<datasets::Example> examples;
    for (int i = 0; i < n; ++i) {
      datasets::Example e;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "fx-%04d", i);
      e.id = buf;
      e.text = "doc " + e.id;
      e.gold = labels.at(rng() % 2);
      examples.push_back(std::move(e));
    }
    datasets::Dataset dataset("flip-" + std::to_string(trial), labels,
                              std::move(examples));
    std::set<std::string> a, b;
    for (const auto& id : dataset.canonical_ids()) {
      if (rng() % 2) a.insert(id);
      if (rng() % 2) b.insert(id);
    }
    auto baseline = testsupport::build_point_run(dataset, a, "m-a", "p", 1);
    auto candidate = testsupport::build_point_run(dataset, b, "m-b", "p", 1);
    auto counts = analysis::count_flips(
        analysis::classify_flips(baseline, candidate, dataset));
    // integer-ratio comparison: correct_c - correct_b == improved - regressed
    const long long lhs =
        static_cast<long long>(b.size()) - static_cast<long long>(a.size());
    const long long rhs = counts.improved - counts.regressed;
    require(lhs == rhs, "accuracy delta identity violated");
    require(counts.total() == n, "flip categories must partition the dataset");
  }
  detail << "1000 randomized pairs";
}

// ---------------------------------------------------------------------------
// 3. archived-pair replay through the compare pipeline

void criterion_figure_replay(std::ostringstream& detail) {
  testsupport::TempDir dir("accept-figures");
  auto civil = testsupport::load_fixture_dataset("civil_comments_1k.jsonl");
  auto github = testsupport::load_fixture_dataset("github_discussions_174.jsonl");

  runner::RunStore store(dir.path() / "store");
  auto civil_fix = testsupport::build_civil_pair(civil);
  auto github_fix = testsupport::build_github_pair(github);
  runner::persist_run_record(store, civil_fix.baseline);
  runner::persist_run_record(store, civil_fix.candidate);
  runner::persist_run_record(store, civil_fix.sampling);
  runner::persist_run_record(store, github_fix.baseline);
  runner::persist_run_record(store, github_fix.candidate);

  const auto civil_path = testsupport::fixture_root() / "datasets" /
                          "civil_comments_1k.jsonl";
  const auto github_path = testsupport::fixture_root() / "datasets" /
                           "github_discussions_174.jsonl";
  const auto out_path = dir.path() / "civil.json";

  int code = cli::cli_main(
      {"compare", "--baseline", civil_fix.baseline.run_id.to_string(), "--candidate",
       civil_fix.candidate.run_id.to_string(), "--sampling-run",
       civil_fix.sampling.run_id.to_string(), "--dataset", civil_path.string(),
       "--store", (dir.path() / "store").string(), "--positive", "toxic", "--format",
       "json", "--out", out_path.string()});
  require(code == 0, "civil compare run failed");
  json civil_doc = json::parse(std::ifstream(out_path));
  const auto& overall = civil_doc.at("payload").at("overall");
  require(std::abs(overall.at("accuracy_baseline").get<double>() - 0.733) < 1e-9,
          "baseline accuracy is not 0.733");
  require(std::abs(overall.at("accuracy_candidate").get<double>() - 0.820) < 1e-9,
          "candidate accuracy is not 0.820");
  require(std::abs(overall.at("accuracy_delta").get<double>() - 0.087) < 1e-9,
          "delta is not 0.087");

  const auto& entropy = civil_doc.at("payload").at("entropy");
  const double regressed = entropy.at("regressed").at("mean").get<double>();
  const double improved = entropy.at("improved").at("mean").get<double>();
  const double unflipped = entropy.at("unflipped").at("mean").get<double>();
  require(std::abs(regressed - 0.251) < 0.0005, "regressed mean entropy misses 0.251");
  require(std::abs(improved - 0.296) < 0.0005, "improved mean entropy misses 0.296");
  require(std::abs(unflipped - 0.137) < 0.0005, "unflipped mean entropy misses 0.137");

  const auto github_out = dir.path() / "github.json";
  code = cli::cli_main(
      {"compare", "--baseline", github_fix.baseline.run_id.to_string(), "--candidate",
       github_fix.candidate.run_id.to_string(), "--dataset", github_path.string(),
       "--slices", (testsupport::fixture_root() / "slices" / "github_fig3.json").string(),
       "--store", (dir.path() / "store").string(), "--positive", "toxic", "--format",
       "json", "--out", github_out.string()});
  require(code == 0, "github compare run failed");
  json github_doc = json::parse(std::ifstream(github_out));
  struct Expect {
    const char* name;
    double share;
    double rate;
  };
  const Expect expected[] = {{"toxic-politics", 0.333, 0.257},
                             {"toxic-code", 0.333, 0.216},
                             {"toxic-severe", 0.667, 0.541}};
  for (const auto& expect : expected) {
    bool found = false;
    for (const auto& row : github_doc.at("payload").at("slices")) {
      if (row.at("name") != expect.name) {
        continue;
      }
      found = true;
      require(std::abs(row.at("share_of_regressions").get<double>() - expect.share) <
                  0.0005,
              std::string(expect.name) + " share misses " + std::to_string(expect.share));
      require(std::abs(row.at("slice_base_rate").get<double>() - expect.rate) < 0.0005,
              std::string(expect.name) + " base rate misses " + std::to_string(expect.rate));
    }
    require(found, std::string("slice row missing: ") + expect.name);
  }
  detail << "accuracy delta, entropy row, and 3 slice-share pairs reproduced";
}

// ---------------------------------------------------------------------------
// 4. McNemar oracle

void criterion_mcnemar(std::ostringstream& detail) {
  auto oracle = [](long long b, long long c) {
    const long long n = b + c;
    if (n == 0) return 1.0;
    const long long m = std::min(b, c);
    unsigned __int128 sum = 0;
    unsigned __int128 binom = 1;
    for (long long k = 0; k <= m; ++k) {
      if (k > 0) {
        binom = binom * static_cast<unsigned __int128>(n - k + 1) /
                static_cast<unsigned __int128>(k);
      }
      sum += binom;
    }
    long double p = 2.0L * static_cast<long double>(sum) /
                    powl(2.0L, static_cast<long double>(n));
    return static_cast<double>(std::min(1.0L, p));
  };

  double max_error = 0.0;
  long long checked = 0;
  for (long long total = 0; total <= 60; ++total) {
    for (long long b = 0; b <= total; ++b) {
      const long long c = total - b;
      max_error = std::max(max_error,
                           std::abs(regress::mcnemar_test(b, c) - oracle(b, c)));
      ++checked;
    }
  }
  require(max_error < 1e-10, "p-value error above 1e-10");
  require(std::abs(regress::mcnemar_test(5, 15) - 0.04139) < 5e-6,
          "p(5,15) misses 0.04139");
  detail << checked << " (b,c) pairs, max |err| " << max_error;
}

// ---------------------------------------------------------------------------
// 5/6. statistical experiments

driftsim::DriftSpec null_drift_spec() {
  driftsim::DriftSpec drift;
  drift.base.model_name = "synthetic-base";
  drift.base.seed = 1;
  drift.base.base_accuracy = 0.8;
  drift.base.kappa = 0.3;
  return drift;
}

regress::RegressionTest core_accuracy_test() {
  regress::RegressionTest test;
  test.name = "core-accuracy";
  test.slice = datasets::SliceSpec::from_json(
      {{"name", "core"}, {"meta", {{"segment", "core"}}}});
  test.metric = regress::Metric::ACCURACY;
  test.delta = 0.05;
  test.alpha = 0.05;
  test.min_n = 1;
  return test;
}

void criterion_calibration(std::ostringstream& detail) {
  auto dataset = driftsim::make_slice_dataset("accept-cal", 200, 60, "segment", "core");
  auto result = driftsim::calibration_experiment(null_drift_spec(),
                                                 core_accuracy_test(), dataset, 500,
                                                 20260801);
  require(result.trials == 500, "expected 500 trials");
  require(result.fail_rate <= 0.0695,
          "null FAIL rate " + std::to_string(result.fail_rate) + " above 0.0695");
  detail << "FAIL rate " << result.fail_rate << " over 500 null trials";
}

void criterion_power(std::ostringstream& detail) {
  auto dataset = driftsim::make_slice_dataset("accept-pow", 200, 60, "segment", "core");
  auto drift = null_drift_spec();
  drift.deltas.push_back(
      {datasets::SliceSpec::from_json({{"name", "core"}, {"meta", {{"segment", "core"}}}}),
       -0.10});
  auto result = driftsim::power_experiment(drift, core_accuracy_test(), dataset, 500,
                                           20260802);
  require(result.fail_rate >= 0.80,
          "detection " + std::to_string(result.fail_rate) + " below 0.80");
  detail << "detection " << result.fail_rate << " over 500 drifted trials";
}

// ---------------------------------------------------------------------------
// 7. parsing safety corpus

void criterion_parsing(std::ostringstream& detail) {
  prompts::LabelParseRule rule{core::LabelSet::from_names({"toxic", "non-toxic"})};
  struct Case {
    const char* raw;
    const char* expected;  // label name, or nullptr for UNPARSED
  };
  const Case corpus[] = {
      {"toxic", "toxic"},
      {"non-toxic", "non-toxic"},
      {"Toxic", "toxic"},
      {"NON-TOXIC", "non-toxic"},
      {" toxic ", "toxic"},
      {"Label: toxic.", "toxic"},
      {"Label: non-toxic.", "non-toxic"},
      {"the comment is toxic", "toxic"},
      {"the comment is non-toxic", "non-toxic"},
      {"\"toxic\"", "toxic"},
      {"'non-toxic'", "non-toxic"},
      {"answer=toxic", "toxic"},
      {"toxic!", "toxic"},
      {"toxic\n", "toxic"},
      {"I would say: non-toxic, overall.", "non-toxic"},
      {"This is clearly a toxic remark.", "toxic"},
      {"non-toxic non-toxic non-toxic", "non-toxic"},
      {"toxic toxic", "toxic"},
      {"It could be either toxic or non-toxic.", nullptr},
      {"toxic and also non-toxic", nullptr},
      {"", nullptr},
      {"no label here", nullptr},
      {"toxicity", nullptr},
      {"intoxicating", nullptr},
      {"detoxic", nullptr},
      {"nontoxic", nullptr},        // missing hyphen: not a declared label
      {"toxic-ish", nullptr},       // hyphen continues the token
      {"atoxic", nullptr},
      {"TOXICITY scores", nullptr},
      {"the toxins are strong", nullptr},
      {"sub-toxic", nullptr},       // hyphen-joined, not a standalone token
      {"non - toxic", "toxic"},     // spaced hyphen frees the bare token
      {"Classification: TOXIC (confidence high)", "toxic"},
      {"label:non-toxic", "non-toxic"},
  };
  int checked = 0;
  for (const auto& c : corpus) {
    auto parsed = prompts::parse_label(c.raw, rule);
    if (c.expected == nullptr) {
      require(!parsed.has_value(),
              std::string("expected UNPARSED for: ") + c.raw);
    } else {
      require(parsed.has_value(), std::string("expected a parse for: ") + c.raw);
      require(parsed->name() == c.expected,
              std::string("wrong label for: ") + c.raw + " -> " + parsed->name());
    }
    ++checked;
  }
  require(checked >= 30, "corpus must cover at least 30 outputs");
  detail << checked << " adversarial outputs, zero substring false positives";
}

// ---------------------------------------------------------------------------
// 8. hermetic record/replay

void criterion_hermetic(std::ostringstream& detail) {
  testsupport::TempDir dir("accept-hermetic");

  // 20-example dataset and a local OpenAI-compatible stub.
  auto labels = core::LabelSet::from_names({"toxic", "non-toxic"});
  std::vector<datasets::Example> examples;
  for (int i = 0; i < 20; ++i) {
    datasets::Example e;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "rec-%02d", i);
    e.id = buf;
    e.text = "hermetic document " + std::string(buf);
    e.gold = labels.at(i % 2);
    examples.push_back(std::move(e));
  }
  datasets::Dataset dataset("hermetic-20", labels, std::move(examples));

  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/completions", [&](const httplib::Request& req,
                                     httplib::Response& res) {
    ++hits;
    auto body = json::parse(req.body);
    // answer depends on the prompt so samples are distinguishable
    const std::string prompt = body.at("prompt").get<std::string>();
    const std::string text =
        prompt.find("0") != std::string::npos ? "toxic" : "non-toxic";
    json choices = json::array();
    for (int i = 0; i < body.at("n").get<int>(); ++i) {
      choices.push_back({{"index", i}, {"text", text}, {"finish_reason", "stop"}});
    }
    res.set_content(
        json{{"choices", choices},
             {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 1}}}}
            .dump(),
        "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  prompts::PromptRegistry registry(dir.path() / "prompts");
  prompts::PromptTemplate tmpl;
  tmpl.prompt_id = "hermetic";
  tmpl.mode = prompts::PromptMode::COMPLETION;
  tmpl.body = "classify: {text}";
  tmpl.created_at = "2026-01-05T00:00:00Z";
  registry.register_prompt(tmpl);

  runner::RunConfig config;
  config.model = {"local-stub", "stub-completion", prompts::PromptMode::COMPLETION, ""};
  config.prompt_id = "hermetic";
  config.prompt_version = 1;
  config.dataset_id = dataset.id();
  config.dataset_digest = dataset.digest();
  config.params = providers::SamplingParams::point_prediction();

  providers::HttpProviderOptions options;
  options.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  options.api_key = "local";
  providers::HttpProvider http(options);

  runner::RunStore record_store(dir.path() / "store-record");
  providers::ReplayStore recorder(dir.path() / "replay", providers::ReplayMode::RECORD);
  auto recorded = runner::execute_run(config, dataset, registry, http, recorder,
                                      record_store, {4});
  require(recorded.status == runner::RunStatus::COMPLETE, "record phase incomplete");
  const int recorded_hits = hits.load();
  require(recorded_hits == 20, "expected one stub hit per example");

  server.stop();
  server_thread.join();  // network path disabled from here on

  runner::RunStore replay_store(dir.path() / "store-replay");
  providers::ReplayStore replayer(dir.path() / "replay", providers::ReplayMode::REPLAY);
  testsupport::CountingProvider poison(nullptr, /*poison=*/true);
  auto replayed = runner::execute_run(config, dataset, registry, poison, replayer,
                                      replay_store, {4});
  require(poison.calls() == 0, "replay must not touch the provider");
  require(replayed.run_id == recorded.run_id, "run ids differ across phases");

  auto read_file = [](const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  const auto original =
      read_file(record_store.run_dir(recorded.run_id) / "samples.recl");
  const auto replay_bytes =
      read_file(replay_store.run_dir(replayed.run_id) / "samples.recl");
  require(!original.empty(), "recorded samples journal is empty");
  require(original == replay_bytes, "samples journals differ byte-for-byte");
  detail << "20 recorded examples, " << recorded_hits
         << " live calls, 0 on replay, identical journals";
}

// ---------------------------------------------------------------------------
// 9. wire-format goldens

void criterion_goldens(std::ostringstream& detail) {
  auto read_file = [](const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "missing golden file " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  const auto golden = testsupport::fixture_root() / "golden";

  providers::ModelRef completion{"openai", "gpt-3.5-turbo-instruct",
                                 prompts::PromptMode::COMPLETION, ""};
  providers::ModelRef chat{"openai", "gpt-3.5-turbo-0613", prompts::PromptMode::CHAT,
                           ""};
  providers::RenderedPrompt completion_prompt;
  completion_prompt.mode = prompts::PromptMode::COMPLETION;
  completion_prompt.completion_text =
      "Classify the GitHub discussion as \"toxic\" or \"non-toxic\". Only reply "
      "with the label.\nDocument: hi there";
  providers::RenderedPrompt chat_prompt;
  chat_prompt.mode = prompts::PromptMode::CHAT;
  chat_prompt.messages.push_back({"user", completion_prompt.completion_text});

  const auto cold = providers::SamplingParams::point_prediction();
  const auto warm = providers::SamplingParams::confidence_profile();
  require(providers::serialize_request(completion, completion_prompt, cold) ==
              read_file(golden / "completion_t0_n1.json"),
          "completion t=0 body differs from golden");
  require(providers::serialize_request(completion, completion_prompt, warm) ==
              read_file(golden / "completion_t07_n20.json"),
          "completion t=0.7 body differs from golden");
  require(providers::serialize_request(chat, chat_prompt, cold) ==
              read_file(golden / "chat_t0_n1.json"),
          "chat t=0 body differs from golden");
  require(providers::serialize_request(chat, chat_prompt, warm) ==
              read_file(golden / "chat_t07_n20.json"),
          "chat t=0.7 body differs from golden");
  detail << "4 golden bodies byte-identical";
}

// ---------------------------------------------------------------------------
// 10. suite exit-code contract

void criterion_suite_exits(std::ostringstream& detail) {
  testsupport::TempDir dir("accept-suites");
  auto dataset = testsupport::load_fixture_dataset("suitefix_260.jsonl");
  auto runs = testsupport::build_suite_runs(dataset);
  runner::RunStore store(dir.path() / "store");
  runner::persist_run_record(store, runs.baseline);
  runner::persist_run_record(store, runs.candidate_same);
  runner::persist_run_record(store, runs.candidate_drop);

  const auto dataset_path =
      (testsupport::fixture_root() / "datasets" / "suitefix_260.jsonl").string();
  const auto store_path = (dir.path() / "store").string();
  auto suite_path = [](const char* name) {
    return (testsupport::fixture_root() / "suites" / name).string();
  };
  auto run_suite_cmd = [&](const char* suite, const runner::RunRecord& candidate) {
    return cli::cli_main({"suite", "--suite", suite_path(suite), "--baseline",
                          runs.baseline.run_id.to_string(), "--candidate",
                          candidate.run_id.to_string(), "--dataset", dataset_path,
                          "--store", store_path, "--out",
                          (std::filesystem::temp_directory_path() / "suite-out.txt")
                              .string()});
  };

  const int all_pass = run_suite_cmd("all_pass.suite.json", runs.candidate_same);
  require(all_pass == 0, "all-pass suite exited " + std::to_string(all_pass));
  const int one_fail = run_suite_cmd("one_fail.suite.json", runs.candidate_drop);
  require(one_fail == 1, "one-fail suite exited " + std::to_string(one_fail));
  const int undersized = run_suite_cmd("undersized.suite.json", runs.candidate_same);
  require(undersized == 2, "undersized suite exited " + std::to_string(undersized));
  detail << "exit codes 0/1/2 as specified";
}

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "entropy oracle over 1000 random count vectors", 1.0, criterion_entropy},
      {2, "accuracy-delta flip identity on 1000 synthetic pairs", 10.0,
       criterion_flip_identity},
      {3, "archived comparison pair replayed through compare", 5.0,
       criterion_figure_replay},
      {4, "exact McNemar against the integer-binomial oracle", 5.0,
       criterion_mcnemar},
      {5, "null calibration: FAIL rate within the binomial bound", 120.0,
       criterion_calibration},
      {6, "10-point drift detected in at least 80% of trials", 120.0,
       criterion_power},
      {7, "adversarial label-parsing corpus", 5.0, criterion_parsing},
      {8, "hermetic record/replay with zero network on replay", 30.0,
       criterion_hermetic},
      {9, "wire-format golden bodies", 5.0, criterion_goldens},
      {10, "fixture suite exit codes 0/1/2", 30.0, criterion_suite_exits},
  };
  for (const auto& criterion : criteria) {
    run_criterion(criterion);
  }
  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all 10 acceptance criteria passed\n");
  return 0;
}
