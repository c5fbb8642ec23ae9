#include "llmregress/driftsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace llmregress::driftsim {

namespace {

using nlohmann::json;

constexpr double kMaxFlipProb = 0.5;

std::uint64_t mix_seed(std::uint64_t seed, int trial, const char* role) {
  return core::hash64("trial|" + std::to_string(seed) + "|" + std::to_string(trial) +
                      "|" + role);
}

const core::Label& other_label(const core::LabelSet& label_set,
                               const core::Label& label, double draw) {
  const auto& labels = label_set.labels();
  if (labels.size() == 2) {
    return labels[0] == label ? labels[1] : labels[0];
  }
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!(labels[i] == label)) {
      others.push_back(i);
    }
  }
  auto pick = static_cast<std::size_t>(draw * static_cast<double>(others.size()));
  if (pick >= others.size()) {
    pick = others.size() - 1;
  }
  return labels[others[pick]];
}

runner::RunRecord synthetic_run(const SyntheticModelSpec& spec, const Dataset& dataset,
                                const SamplingParams& params) {
  spec.validate();
  runner::RunConfig config;
  config.model.provider = "synthetic";
  config.model.model_name = spec.model_name;
  config.model.endpoint_type = prompts::PromptMode::COMPLETION;
  config.prompt_id = "sim-identity";
  config.prompt_version = 1;
  config.dataset_id = dataset.id();
  config.dataset_digest = dataset.digest();
  config.params = params;
  config.seed_note = "synthetic-seed:" + std::to_string(spec.seed);

  prompts::LabelParseRule rule{dataset.label_set(), config.parse_rule};

  runner::RunRecord record;
  record.config = config;
  record.run_id = config.run_id();
  record.status = runner::RunStatus::COMPLETE;
  for (const auto& example : dataset.examples()) {
    auto& slot = record.samples[example.id];
    slot.reserve(params.n_samples);
    for (int i = 0; i < params.n_samples; ++i) {
      auto response = synth_sample(spec, example, dataset.label_set(), params, i);
      runner::SampleRecord sample;
      sample.sample_index = response.sample_index;
      sample.raw_text = std::move(response.raw_text);
      sample.parsed = prompts::parse_label(sample.raw_text, rule);
      sample.usage = response.usage;
      slot.push_back(std::move(sample));
    }
  }
  return record;
}

ExperimentResult run_trials(const DriftSpec& drift, const regress::RegressionTest& test,
                            const Dataset& dataset, int n_trials, std::uint64_t seed,
                            bool coupled) {
  if (n_trials <= 0) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "experiment needs n_trials >= 1");
  }
  ExperimentResult result;
  result.trials = n_trials;
  result.outcomes.reserve(n_trials);
  for (int trial = 0; trial < n_trials; ++trial) {
    SyntheticModelSpec baseline_spec = drift.base;
    SyntheticModelSpec candidate_spec = coupled ? drift.apply() : drift.base;
    if (coupled) {
      baseline_spec.seed = mix_seed(seed, trial, "shared");
      candidate_spec.seed = baseline_spec.seed;
    } else {
      baseline_spec.seed = mix_seed(seed, trial, "baseline");
      candidate_spec.seed = mix_seed(seed, trial, "candidate");
    }

    auto baseline = synthetic_point_run(baseline_spec, dataset);
    auto candidate = synthetic_point_run(candidate_spec, dataset);
    auto verdict = regress::evaluate_test(test, baseline, candidate, dataset);

    TrialOutcome outcome;
    outcome.trial = trial;
    outcome.status = verdict.status;
    outcome.flaky = verdict.flaky;
    outcome.observed_delta = verdict.observed_delta;
    outcome.p_value = verdict.p_value;
    result.outcomes.push_back(outcome);
    if (verdict.status == regress::VerdictStatus::FAIL) {
      ++result.fails;
    }
  }
  result.fail_rate =
      static_cast<double>(result.fails) / static_cast<double>(result.trials);
  const double half_width =
      1.959964 * std::sqrt(result.fail_rate * (1.0 - result.fail_rate) /
                           static_cast<double>(result.trials));
  result.ci_low = std::max(0.0, result.fail_rate - half_width);
  result.ci_high = std::min(1.0, result.fail_rate + half_width);
  return result;
}

}  // namespace

double SyntheticModelSpec::accuracy_for(const datasets::Example& example) const {
  for (const auto& entry : per_slice_accuracy) {
    if (datasets::example_matches(example, entry.slice)) {
      return entry.accuracy;
    }
  }
  return base_accuracy;
}

void SyntheticModelSpec::validate() const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(base_accuracy)) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "base_accuracy must be in [0,1]");
  }
  for (const auto& entry : per_slice_accuracy) {
    if (!in_unit(entry.accuracy)) {
      throw Error(ErrorCode::INVALID_ARGUMENT,
                  "slice '" + entry.slice.name + "' accuracy must be in [0,1]");
    }
  }
  if (kappa < 0.0) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "kappa must be >= 0");
  }
}

nlohmann::json SyntheticModelSpec::to_json() const {
  json slices = json::array();
  for (const auto& entry : per_slice_accuracy) {
    slices.push_back({{"slice", entry.slice.to_json()}, {"accuracy", entry.accuracy}});
  }
  return json{{"model_name", model_name},
              {"seed", seed},
              {"base_accuracy", base_accuracy},
              {"per_slice_accuracy", std::move(slices)},
              {"kappa", kappa}};
}

SyntheticModelSpec SyntheticModelSpec::from_json(const nlohmann::json& j) {
  SyntheticModelSpec spec;
  spec.model_name = j.value("model_name", "synthetic");
  spec.seed = j.value("seed", std::uint64_t{1});
  spec.base_accuracy = j.at("base_accuracy").get<double>();
  if (j.contains("per_slice_accuracy")) {
    for (const auto& entry : j.at("per_slice_accuracy")) {
      SliceAccuracy sa;
      sa.slice = SliceSpec::from_json(entry.at("slice"));
      sa.accuracy = entry.at("accuracy").get<double>();
      spec.per_slice_accuracy.push_back(std::move(sa));
    }
  }
  spec.kappa = j.value("kappa", 0.3);
  spec.validate();
  return spec;
}

SyntheticModelSpec DriftSpec::apply() const {
  SyntheticModelSpec out = base;
  for (const auto& d : deltas) {
    if (d.slice.is_whole_dataset()) {
      out.base_accuracy += d.delta;
      continue;
    }
    bool found = false;
    for (auto& entry : out.per_slice_accuracy) {
      if (entry.slice.name == d.slice.name) {
        entry.accuracy += d.delta;
        found = true;
        break;
      }
    }
    if (!found) {
      out.per_slice_accuracy.push_back(SliceAccuracy{d.slice, base.base_accuracy + d.delta});
    }
  }
  out.validate();  // post-drift accuracies must stay in [0,1]
  return out;
}

bool DriftSpec::has_drift() const {
  return std::any_of(deltas.begin(), deltas.end(),
                     [](const SliceDelta& d) { return d.delta != 0.0; });
}

nlohmann::json DriftSpec::to_json() const {
  json deltas_json = json::array();
  for (const auto& d : deltas) {
    deltas_json.push_back({{"slice", d.slice.to_json()}, {"delta", d.delta}});
  }
  return json{{"base", base.to_json()}, {"deltas", std::move(deltas_json)}};
}

DriftSpec DriftSpec::from_json(const nlohmann::json& j) {
  DriftSpec spec;
  spec.base = SyntheticModelSpec::from_json(j.at("base"));
  if (j.contains("deltas")) {
    for (const auto& entry : j.at("deltas")) {
      SliceDelta d;
      d.slice = SliceSpec::from_json(entry.at("slice"));
      d.delta = entry.at("delta").get<double>();
      spec.deltas.push_back(std::move(d));
    }
  }
  return spec;
}

DriftSpec load_drift_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IO_ERROR, "cannot open drift spec " + path.string());
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::MALFORMED_RECORD,
                "drift spec " + path.string() + " is not valid JSON");
  }
  if (j.contains("base")) {
    return DriftSpec::from_json(j);
  }
  return DriftSpec{SyntheticModelSpec::from_json(j), {}};
}

double counter_uniform(std::uint64_t seed, const std::string& example_id,
                       int sample_index, const std::string& tag) {
  const std::uint64_t word =
      core::hash64("drift|" + std::to_string(seed) + "|" + example_id + "|" +
                   std::to_string(sample_index) + "|" + tag);
  return static_cast<double>(word >> 11) * 0x1.0p-53;
}

SampleResponse synth_sample(const SyntheticModelSpec& spec,
                            const datasets::Example& example,
                            const core::LabelSet& label_set,
                            const SamplingParams& params, int sample_index) {
  const double p_correct = std::clamp(spec.accuracy_for(example), 0.0, 1.0);
  const bool intended_correct =
      counter_uniform(spec.seed, example.id, 0, "intent") < p_correct;

  const core::Label* intended = &example.gold;
  if (!intended_correct) {
    intended = &other_label(label_set, example.gold,
                            counter_uniform(spec.seed, example.id, 0, "wrong"));
  }

  const double flip_prob =
      std::clamp(spec.kappa * params.temperature, 0.0, kMaxFlipProb);
  const core::Label* emitted = intended;
  if (flip_prob > 0.0 &&
      counter_uniform(spec.seed, example.id, sample_index, "flip") < flip_prob) {
    emitted = &other_label(
        label_set, *intended,
        counter_uniform(spec.seed, example.id, sample_index, "flip-target"));
  }

  SampleResponse response;
  response.sample_index = sample_index;
  response.raw_text = emitted->name();
  response.finish_reason = "stop";
  response.usage.prompt_tokens = static_cast<int>(example.text.size() / 4 + 1);
  response.usage.completion_tokens = 1;
  response.latency_ms = 0;
  return response;
}

SyntheticProvider::SyntheticProvider(SyntheticModelSpec spec, const Dataset& dataset)
    : spec_(std::move(spec)), dataset_(dataset) {
  spec_.validate();
  for (const auto& example : dataset_.examples()) {
    by_text_.emplace(example.text, example.id);
  }
}

const datasets::Example& SyntheticProvider::locate(
    const providers::RenderedPrompt& prompt) const {
  const std::string* text = nullptr;
  if (prompt.mode == prompts::PromptMode::COMPLETION) {
    text = &prompt.completion_text;
  } else {
    for (auto it = prompt.messages.rbegin(); it != prompt.messages.rend(); ++it) {
      if (it->role == "user") {
        text = &it->content;
        break;
      }
    }
  }
  if (!text) {
    throw Error(ErrorCode::PROVIDER_FAILURE, "rendered prompt has no user content");
  }
  // Identity template fast path.
  auto exact = by_text_.find(*text);
  if (exact != by_text_.end()) {
    return dataset_.example(exact->second);
  }
  // Otherwise the example text is embedded in a larger template.
  const datasets::Example* match = nullptr;
  for (const auto& example : dataset_.examples()) {
    if (text->find(example.text) != std::string::npos) {
      if (match) {
        throw Error(ErrorCode::PROVIDER_FAILURE,
                    "prompt matches several dataset examples ('" + match->id +
                        "', '" + example.id + "')");
      }
      match = &example;
    }
  }
  if (!match) {
    throw Error(ErrorCode::PROVIDER_FAILURE,
                "prompt does not contain any dataset example text");
  }
  return *match;
}

std::vector<SampleResponse> SyntheticProvider::fetch(
    const providers::ModelRef& model, const providers::RenderedPrompt& prompt,
    const SamplingParams& params, const std::vector<int>& indices) const {
  (void)model;
  const auto& example = locate(prompt);
  std::vector<SampleResponse> out;
  out.reserve(indices.size());
  for (int index : indices) {
    out.push_back(synth_sample(spec_, example, dataset_.label_set(), params, index));
  }
  return out;
}

runner::RunRecord synthetic_point_run(const SyntheticModelSpec& spec,
                                      const Dataset& dataset) {
  return synthetic_run(spec, dataset, SamplingParams::point_prediction());
}

runner::RunRecord synthetic_sampling_run(const SyntheticModelSpec& spec,
                                         const Dataset& dataset,
                                         const SamplingParams& params) {
  if (params.n_samples < 2) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "sampling run needs n_samples >= 2");
  }
  return synthetic_run(spec, dataset, params);
}

ExperimentResult calibration_experiment(const DriftSpec& drift,
                                        const regress::RegressionTest& test,
                                        const Dataset& dataset, int n_trials,
                                        std::uint64_t seed) {
  if (drift.has_drift()) {
    throw Error(ErrorCode::NONZERO_DRIFT,
                "calibration runs under the null; all drift deltas must be zero");
  }
  return run_trials(drift, test, dataset, n_trials, seed, /*coupled=*/false);
}

ExperimentResult power_experiment(const DriftSpec& drift,
                                  const regress::RegressionTest& test,
                                  const Dataset& dataset, int n_trials,
                                  std::uint64_t seed) {
  if (!drift.has_drift()) {
    throw Error(ErrorCode::ZERO_DRIFT, "power experiment needs a nonzero drift delta");
  }
  return run_trials(drift, test, dataset, n_trials, seed, /*coupled=*/true);
}

std::string experiment_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "trial,verdict,flaky,delta,p_value\n";
  for (const auto& o : result.outcomes) {
    out << o.trial << ',' << regress::verdict_status_name(o.status) << ','
        << (o.flaky ? "true" : "false") << ',' << o.observed_delta << ','
        << o.p_value << "\n";
  }
  return out.str();
}

Dataset make_slice_dataset(const std::string& id, int n_in, int n_out,
                           const std::string& key, const std::string& value) {
  if (n_in + n_out < 2) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "dataset needs at least 2 examples");
  }
  auto label_set = core::LabelSet::from_names({"positive", "negative"});
  std::vector<datasets::Example> examples;
  examples.reserve(n_in + n_out);
  char buf[16];
  for (int i = 0; i < n_in + n_out; ++i) {
    std::snprintf(buf, sizeof(buf), "%05d", i);
    datasets::Example e;
    e.id = "ex-" + std::string(buf);
    e.text = "synthetic document " + std::string(buf) + " for simulation";
    e.gold = label_set.at(i % 2);
    e.metadata.emplace(key, i < n_in ? value : "other");
    examples.push_back(std::move(e));
  }
  return Dataset(id, label_set, std::move(examples), "generated for simulations");
}

}  // namespace llmregress::driftsim
