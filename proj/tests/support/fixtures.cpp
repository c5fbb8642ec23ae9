#include "fixtures.hpp"

#include <atomic>
#include <random>

#include "llmregress/prompts.hpp"

namespace llmregress::testsupport {

namespace {

std::string other_label_name(const datasets::Dataset& dataset,
                             const core::Label& label) {
  for (const auto& candidate : dataset.label_set().labels()) {
    if (!(candidate == label)) {
      return candidate.name();
    }
  }
  throw Error(ErrorCode::INVALID_ARGUMENT, "label set has a single label");
}

runner::RunConfig fixture_config(const datasets::Dataset& dataset,
                                 const std::string& model_name,
                                 const std::string& prompt_id, int prompt_version,
                                 const providers::SamplingParams& params) {
  runner::RunConfig config;
  config.model.provider = "fixture";
  config.model.model_name = model_name;
  config.model.endpoint_type = prompts::PromptMode::COMPLETION;
  config.prompt_id = prompt_id;
  config.prompt_version = prompt_version;
  config.dataset_id = dataset.id();
  config.dataset_digest = dataset.digest();
  config.params = params;
  return config;
}

runner::SampleRecord make_sample(const datasets::Dataset& dataset, int index,
                                 const std::string& text) {
  prompts::LabelParseRule rule{dataset.label_set(), runner::kDefaultParseRule};
  runner::SampleRecord sample;
  sample.sample_index = index;
  sample.raw_text = text;
  sample.parsed = prompts::parse_label(text, rule);
  sample.usage.prompt_tokens = 12;
  sample.usage.completion_tokens = 1;
  return sample;
}

}  // namespace

TempDir::TempDir(const std::string& tag) {
  static std::atomic<unsigned> counter{0};
  auto base = std::filesystem::temp_directory_path();
  std::random_device rd;
  path_ = base / ("llmregress-" + tag + "-" + std::to_string(rd()) + "-" +
                  std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::filesystem::path fixture_root() {
  auto dir = std::filesystem::current_path();
  for (int depth = 0; depth < 8; ++depth) {
    if (std::filesystem::exists(dir / "fixtures" / "datasets")) {
      return dir / "fixtures";
    }
    if (!dir.has_parent_path() || dir.parent_path() == dir) {
      break;
    }
    dir = dir.parent_path();
  }
  throw Error(ErrorCode::IO_ERROR, "fixtures/ not found above " +
                                       std::filesystem::current_path().string());
}

datasets::Dataset load_fixture_dataset(const std::string& name) {
  return datasets::load_dataset(fixture_root() / "datasets" / name);
}

std::vector<providers::SampleResponse> CountingProvider::fetch(
    const providers::ModelRef& model, const providers::RenderedPrompt& prompt,
    const providers::SamplingParams& params, const std::vector<int>& indices) const {
  ++calls_;
  samples_ += static_cast<int>(indices.size());
  if (poison_ || !inner_) {
    throw Error(ErrorCode::PROVIDER_FAILURE,
                "network path invoked; expected fully hermetic execution");
  }
  return inner_->fetch(model, prompt, params, indices);
}

runner::RunRecord build_point_run(const datasets::Dataset& dataset,
                                  const std::set<std::string>& correct_ids,
                                  const std::string& model_name,
                                  const std::string& prompt_id, int prompt_version) {
  auto config = fixture_config(dataset, model_name, prompt_id, prompt_version,
                               providers::SamplingParams::point_prediction());
  runner::RunRecord record;
  record.config = config;
  record.run_id = config.run_id();
  record.status = runner::RunStatus::COMPLETE;
  for (const auto& example : dataset.examples()) {
    const bool correct = correct_ids.count(example.id) > 0;
    const std::string text =
        correct ? example.gold.name() : other_label_name(dataset, example.gold);
    record.samples[example.id].push_back(make_sample(dataset, 0, text));
  }
  return record;
}

runner::RunRecord build_sampling_run(
    const datasets::Dataset& dataset, const std::set<std::string>& correct_ids,
    const std::map<std::string, CountShape>& shapes, const std::string& model_name,
    const std::string& prompt_id, int prompt_version) {
  auto config = fixture_config(dataset, model_name, prompt_id, prompt_version,
                               providers::SamplingParams::confidence_profile());
  runner::RunRecord record;
  record.config = config;
  record.run_id = config.run_id();
  record.status = runner::RunStatus::COMPLETE;
  for (const auto& example : dataset.examples()) {
    CountShape shape;
    if (auto it = shapes.find(example.id); it != shapes.end()) {
      shape = it->second;
    }
    if (shape.on_point + shape.off_point + shape.unparsed !=
        config.params.n_samples) {
      throw Error(ErrorCode::INVALID_ARGUMENT,
                  "count shape for '" + example.id + "' does not sum to n");
    }
    const bool correct = correct_ids.count(example.id) > 0;
    const std::string point_text =
        correct ? example.gold.name() : other_label_name(dataset, example.gold);
    const std::string off_text =
        point_text == example.gold.name() ? other_label_name(dataset, example.gold)
                                          : example.gold.name();
    auto& slot = record.samples[example.id];
    int index = 0;
    for (int i = 0; i < shape.on_point; ++i) {
      slot.push_back(make_sample(dataset, index++, point_text));
    }
    for (int i = 0; i < shape.off_point; ++i) {
      slot.push_back(make_sample(dataset, index++, off_text));
    }
    for (int i = 0; i < shape.unparsed; ++i) {
      slot.push_back(make_sample(dataset, index++, "???"));
    }
  }
  return record;
}

CivilFixture build_civil_pair(const datasets::Dataset& civil) {
  if (civil.size() != 1000) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "civil fixture needs 1000 examples");
  }
  const auto& ids = civil.canonical_ids();

  // Partition: 47 regressed, 134 improved, 133 unflipped-wrong, 686
  // unflipped-correct. 733 baseline-correct, 820 candidate-correct.
  CivilFixture fixture;
  std::set<std::string> baseline_correct;
  std::set<std::string> candidate_correct;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string& id = ids[i];
    if (i < 47) {
      fixture.regressed.insert(id);
      baseline_correct.insert(id);
    } else if (i < 47 + 134) {
      fixture.improved.insert(id);
      candidate_correct.insert(id);
    } else if (i < 47 + 134 + 133) {
      // wrong in both
    } else {
      baseline_correct.insert(id);
      candidate_correct.insert(id);
    }
  }

  fixture.baseline =
      build_point_run(civil, baseline_correct, "fixture-instruct", "toxicity-civil", 3);
  fixture.candidate =
      build_point_run(civil, candidate_correct, "fixture-instruct", "toxicity-civil", 4);

  // Sampled count shapes chosen so the per-group mean entropies reproduce the
  // target row: regressed 30x(20/0) + 17x(10/10); improved 76x(20/0) +
  // 57x(10/10) + 1x(19/1); unflipped 657x(20/0) + 162x(10/10).
  std::map<std::string, CountShape> shapes;
  int regressed_seen = 0;
  int improved_seen = 0;
  int unflipped_seen = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string& id = ids[i];
    CountShape shape{20, 0, 0};
    if (fixture.regressed.count(id) > 0) {
      if (regressed_seen >= 30) {
        shape = CountShape{10, 10, 0};
      }
      ++regressed_seen;
    } else if (fixture.improved.count(id) > 0) {
      if (improved_seen >= 76 && improved_seen < 76 + 57) {
        shape = CountShape{10, 10, 0};
      } else if (improved_seen == 76 + 57) {
        shape = CountShape{19, 1, 0};
      }
      ++improved_seen;
    } else {
      if (unflipped_seen >= 657) {
        shape = CountShape{10, 10, 0};
      }
      ++unflipped_seen;
    }
    shapes.emplace(id, shape);
  }

  fixture.sampling = build_sampling_run(civil, candidate_correct, shapes,
                                        "fixture-instruct", "toxicity-civil", 4);
  return fixture;
}

GithubFixture build_github_pair(const datasets::Dataset& github) {
  if (github.size() != 174) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "github fixture needs 174 examples");
  }

  auto id_of = [](int i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "gh-%03d", i);
    return std::string(buf);
  };

  GithubFixture fixture;
  // 27 toxic regressions (indices 0..26: 10 politics, 10 code, 20 severe by
  // the fixture metadata layout) plus 3 non-toxic ones.
  for (int i = 0; i < 27; ++i) {
    fixture.regressed.insert(id_of(i));
  }
  for (int i = 74; i < 77; ++i) {
    fixture.regressed.insert(id_of(i));
  }

  std::set<std::string> improved;
  for (int i = 100; i < 110; ++i) {
    improved.insert(id_of(i));
  }
  std::set<std::string> unflipped_wrong;
  for (int i = 110; i < 120; ++i) {
    unflipped_wrong.insert(id_of(i));
  }

  std::set<std::string> baseline_correct;
  std::set<std::string> candidate_correct;
  for (const auto& example : github.examples()) {
    const bool in_improved = improved.count(example.id) > 0;
    const bool in_uw = unflipped_wrong.count(example.id) > 0;
    const bool in_regressed = fixture.regressed.count(example.id) > 0;
    if (!in_improved && !in_uw) {
      baseline_correct.insert(example.id);
    }
    if ((baseline_correct.count(example.id) > 0 && !in_regressed) || in_improved) {
      candidate_correct.insert(example.id);
    }
  }

  fixture.baseline = build_point_run(github, baseline_correct, "fixture-davinci-002",
                                     "toxicity-github", 2);
  fixture.candidate = build_point_run(github, candidate_correct, "fixture-davinci-003",
                                      "toxicity-github", 2);
  return fixture;
}

SuiteFixture build_suite_runs(const datasets::Dataset& suitefix) {
  if (suitefix.size() != 260) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "suite fixture needs 260 examples");
  }
  auto id_of = [](int i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "sf-%03d", i);
    return std::string(buf);
  };

  // Baseline: core (sf-000..199) 180/200 correct, tail 50/60 correct.
  std::set<std::string> baseline_correct;
  for (int i = 0; i < 180; ++i) baseline_correct.insert(id_of(i));
  for (int i = 200; i < 250; ++i) baseline_correct.insert(id_of(i));

  // Drop: 26 core regressions, 2 core improvements -> 156/200 on core.
  std::set<std::string> drop_correct = baseline_correct;
  for (int i = 0; i < 26; ++i) drop_correct.erase(id_of(i));
  drop_correct.insert(id_of(180));
  drop_correct.insert(id_of(181));

  SuiteFixture fixture;
  fixture.baseline =
      build_point_run(suitefix, baseline_correct, "fixture-old", "suitefix-prompt", 1);
  fixture.candidate_same =
      build_point_run(suitefix, baseline_correct, "fixture-new-same", "suitefix-prompt", 1);
  fixture.candidate_drop =
      build_point_run(suitefix, drop_correct, "fixture-new-drop", "suitefix-prompt", 1);
  return fixture;
}

}  // namespace llmregress::testsupport
