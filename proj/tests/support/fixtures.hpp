#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "llmregress/datasets.hpp"
#include "llmregress/providers.hpp"
#include "llmregress/runner.hpp"

namespace llmregress::testsupport {

// Self-deleting scratch directory for store fixtures.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Repo-relative fixture locations (tests run from anywhere under the tree).
std::filesystem::path fixture_root();
datasets::Dataset load_fixture_dataset(const std::string& name);

// Provider wrapper that counts upstream fetches; `poison` makes any fetch a
// test failure signal (throws).
class CountingProvider : public providers::Provider {
 public:
  explicit CountingProvider(const providers::Provider* inner, bool poison = false)
      : inner_(inner), poison_(poison) {}

  std::vector<providers::SampleResponse> fetch(
      const providers::ModelRef& model, const providers::RenderedPrompt& prompt,
      const providers::SamplingParams& params,
      const std::vector<int>& indices) const override;

  int calls() const { return calls_; }
  int samples_fetched() const { return samples_; }

 private:
  const providers::Provider* inner_;
  bool poison_ = false;
  mutable int calls_ = 0;
  mutable int samples_ = 0;
};

// A complete point run (n=1, t=0) whose predictions are gold exactly on
// `correct_ids`; every other example answers with some wrong label.
runner::RunRecord build_point_run(const datasets::Dataset& dataset,
                                  const std::set<std::string>& correct_ids,
                                  const std::string& model_name,
                                  const std::string& prompt_id, int prompt_version);

// Per-example sampled count shape for sampling-run fixtures.
struct CountShape {
  int on_point = 20;  // samples agreeing with the point prediction
  int off_point = 0;  // samples on the other label
  int unparsed = 0;   // samples that parse to nothing
};

runner::RunRecord build_sampling_run(
    const datasets::Dataset& dataset, const std::set<std::string>& correct_ids,
    const std::map<std::string, CountShape>& shapes, const std::string& model_name,
    const std::string& prompt_id, int prompt_version);

// The archived civil-comments pair: baseline accuracy 0.733, candidate
// 0.820 with 47 regressed / 134 improved, plus a candidate sampling run whose
// per-group mean entropies land on 0.251 / 0.296 / 0.137 and whose
// zero-entropy regression share is 30/47.
struct CivilFixture {
  runner::RunRecord baseline;
  runner::RunRecord candidate;
  runner::RunRecord sampling;
  std::set<std::string> regressed;
  std::set<std::string> improved;
};

CivilFixture build_civil_pair(const datasets::Dataset& civil);

// The slice-share github pair: 30 regressions (27 on toxic examples), with
// politics/code/severe shares 10/30, 10/30, 20/30 against base rates 19/74,
// 16/74, 40/74.
struct GithubFixture {
  runner::RunRecord baseline;
  runner::RunRecord candidate;
  std::set<std::string> regressed;
};

GithubFixture build_github_pair(const datasets::Dataset& github);

// The suitefix-260 runs behind the fixture suites: candidate_same is
// byte-for-byte the baseline predictions; candidate_drop loses 26 core
// examples and gains 2 (0.90 -> 0.78 on the 200-example core slice).
struct SuiteFixture {
  runner::RunRecord baseline;
  runner::RunRecord candidate_same;
  runner::RunRecord candidate_drop;
};

SuiteFixture build_suite_runs(const datasets::Dataset& suitefix);

}  // namespace llmregress::testsupport
