#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "llmregress/datasets.hpp"
#include "llmregress/providers.hpp"
#include "llmregress/regress.hpp"
#include "llmregress/runner.hpp"

namespace llmregress::driftsim {

using datasets::Dataset;
using datasets::SliceSpec;
using providers::SampleResponse;
using providers::SamplingParams;

struct SliceAccuracy {
  SliceSpec slice;
  double accuracy = 0.0;
};

// A deterministic stand-in for a model endpoint: per-example correctness is
// drawn once from a counter-based generator keyed by (seed, example_id), so
// two specs sharing a seed make coupled predictions; temperature adds an
// independent per-sample flip with probability kappa * t (clamped at 0.5).
struct SyntheticModelSpec {
  std::string model_name = "synthetic";
  std::uint64_t seed = 1;
  double base_accuracy = 0.9;
  std::vector<SliceAccuracy> per_slice_accuracy;  // first match wins
  double kappa = 0.3;

  double accuracy_for(const datasets::Example& example) const;
  void validate() const;

  nlohmann::json to_json() const;
  static SyntheticModelSpec from_json(const nlohmann::json& j);
};

struct SliceDelta {
  SliceSpec slice;  // whole-dataset slice shifts base_accuracy
  double delta = 0.0;
};

// The "updated" model: same seed as base (coupled draws), accuracies shifted
// per slice. A pure slice drop therefore regresses exactly the examples whose
// shared draw falls in the vacated probability band.
struct DriftSpec {
  SyntheticModelSpec base;
  std::vector<SliceDelta> deltas;

  SyntheticModelSpec apply() const;
  bool has_drift() const;

  nlohmann::json to_json() const;
  static DriftSpec from_json(const nlohmann::json& j);
};

DriftSpec load_drift_spec(const std::filesystem::path& path);

// Uniform draw in [0,1) keyed by (seed, example_id, sample_index, tag);
// stable across platforms and call order.
double counter_uniform(std::uint64_t seed, const std::string& example_id,
                       int sample_index, const std::string& tag);

// One deterministic sample: the gold label's text with probability
// accuracy_for(example) at t=0; flipped per-sample at t>0.
SampleResponse synth_sample(const SyntheticModelSpec& spec,
                            const datasets::Example& example,
                            const core::LabelSet& label_set,
                            const SamplingParams& params, int sample_index);

// Drop-in providers::Provider. Examples are located by the rendered prompt:
// exact text match first (the identity template), unique-substring scan
// otherwise.
class SyntheticProvider : public providers::Provider {
 public:
  SyntheticProvider(SyntheticModelSpec spec, const Dataset& dataset);

  std::vector<SampleResponse> fetch(const providers::ModelRef& model,
                                    const providers::RenderedPrompt& prompt,
                                    const SamplingParams& params,
                                    const std::vector<int>& indices) const override;

  const SyntheticModelSpec& spec() const { return spec_; }

 private:
  const datasets::Example& locate(const providers::RenderedPrompt& prompt) const;

  SyntheticModelSpec spec_;
  const Dataset& dataset_;
  std::map<std::string, std::string> by_text_;  // text -> example id
};

// In-memory point run (t=0, n=1) of a synthetic model over the dataset, as a
// complete RunRecord ready for the analysis/regress layers.
runner::RunRecord synthetic_point_run(const SyntheticModelSpec& spec,
                                      const Dataset& dataset);

// Sampling run with the given params (n >= 2 for entropy probing).
runner::RunRecord synthetic_sampling_run(const SyntheticModelSpec& spec,
                                         const Dataset& dataset,
                                         const SamplingParams& params);

struct TrialOutcome {
  int trial = 0;
  regress::VerdictStatus status = regress::VerdictStatus::PASS;
  bool flaky = false;
  double observed_delta = 0.0;
  double p_value = 1.0;
};

struct ExperimentResult {
  int trials = 0;
  int fails = 0;
  double fail_rate = 0.0;
  double ci_low = 0.0;   // 95% normal-approximation binomial interval
  double ci_high = 0.0;
  std::vector<TrialOutcome> outcomes;
};

// Null-hypothesis FAIL rate: every trial draws an independent (baseline,
// candidate) pair with identical accuracies but different seeds, i.e. a
// silent update that rewires predictions without moving the metric.
// Requires all-zero deltas (NONZERO_DRIFT otherwise).
ExperimentResult calibration_experiment(const DriftSpec& drift,
                                        const regress::RegressionTest& test,
                                        const Dataset& dataset, int n_trials,
                                        std::uint64_t seed);

// Detection rate under true drift: per trial, baseline and candidate share a
// seed and differ only by the drift deltas. Requires a nonzero delta
// (ZERO_DRIFT otherwise).
ExperimentResult power_experiment(const DriftSpec& drift,
                                  const regress::RegressionTest& test,
                                  const Dataset& dataset, int n_trials,
                                  std::uint64_t seed);

std::string experiment_csv(const ExperimentResult& result);

// Binary-labeled dataset for simulations: `n_in` examples carrying
// {key: value}, `n_out` carrying {key: "other"}, gold alternating over
// {positive, negative}.
Dataset make_slice_dataset(const std::string& id, int n_in, int n_out,
                           const std::string& key, const std::string& value);

}  // namespace llmregress::driftsim
