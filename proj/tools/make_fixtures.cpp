// Regenerates the committed fixture tree (datasets, prompt registry, slices,
// suites, drift specs). Output is deterministic; run from the repo root:
//   ./build/tools/make_fixtures fixtures
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmregress/datasets.hpp"
#include "llmregress/prompts.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace llmregress;

namespace {

std::string pad(int value, int width) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%0*d", width, value);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

datasets::Dataset civil_comments() {
  auto label_set = core::LabelSet::from_names({"toxic", "non-toxic"});
  // 41 toxic out of 1000, spread through the file.
  std::set<int> toxic;
  for (int i = 12; i < 1000; i += 25) {
    toxic.insert(i);  // 40 ids
  }
  toxic.insert(999);
  std::vector<datasets::Example> examples;
  for (int i = 0; i < 1000; ++i) {
    datasets::Example e;
    e.id = "cc-" + pad(i, 4);
    const bool is_toxic = toxic.count(i) > 0;
    e.text = is_toxic
                 ? "synthetic civil comment #" + pad(i, 4) +
                       " carrying a simulated hostile remark."
                 : "synthetic civil comment #" + pad(i, 4) +
                       " making a neutral remark about everyday topics.";
    e.gold = core::Label(is_toxic ? "toxic" : "non-toxic");
    examples.push_back(std::move(e));
  }
  return datasets::Dataset("civil-comments-1k", label_set, std::move(examples),
                           "synthetic stand-in corpus: 1000 comments, 41 toxic");
}

datasets::Dataset github_discussions() {
  auto label_set = core::LabelSet::from_names({"toxic", "non-toxic"});
  auto in_range = [](int i, int lo, int hi) { return i >= lo && i <= hi; };
  std::vector<datasets::Example> examples;
  for (int i = 0; i < 174; ++i) {
    datasets::Example e;
    e.id = "gh-" + pad(i, 3);
    const bool is_toxic = i < 74;
    e.gold = core::Label(is_toxic ? "toxic" : "non-toxic");
    e.text = is_toxic ? "synthetic github discussion #" + pad(i, 3) +
                            " with a simulated heated exchange."
                      : "synthetic github discussion #" + pad(i, 3) +
                            " about an ordinary technical question.";
    if (is_toxic) {
      // 19 politics-triggered, 16 targeting code, 40 severe (overlapping).
      const bool politics = in_range(i, 0, 9) || in_range(i, 27, 35);
      const bool code = in_range(i, 10, 19) || in_range(i, 36, 41);
      const bool severe = in_range(i, 0, 19) || in_range(i, 42, 61);
      e.metadata.emplace("trigger",
                         std::string(politics ? "politics" : "interpersonal"));
      e.metadata.emplace("target", std::string(code ? "code" : "person"));
      e.metadata.emplace("severe", severe);
    }
    examples.push_back(std::move(e));
  }
  return datasets::Dataset("github-discussions-174", label_set, std::move(examples),
                           "synthetic stand-in corpus: 174 discussions, 74 toxic, "
                           "sliceable by trigger/target/severity");
}

datasets::Dataset suite_fixture() {
  auto label_set = core::LabelSet::from_names({"pos", "neg"});
  std::vector<datasets::Example> examples;
  for (int i = 0; i < 260; ++i) {
    datasets::Example e;
    e.id = "sf-" + pad(i, 3);
    e.text = "synthetic suite-fixture document #" + pad(i, 3) + " for verdict tests.";
    e.gold = label_set.at(i % 2);
    e.metadata.emplace("segment", std::string(i < 200 ? "core" : "tail"));
    if (i >= 252) {
      e.metadata.emplace("rare", true);
    }
    examples.push_back(std::move(e));
  }
  return datasets::Dataset("suitefix-260", label_set, std::move(examples),
                           "synthetic dataset backing the fixture suites");
}

struct PromptBody {
  std::string body;
  std::string notes;
};

std::vector<PromptBody> prompt_bodies(const std::string& subject) {
  const std::string instruction = "Classify the " + subject +
                                  " as \"toxic\" or \"non-toxic\". Only reply with "
                                  "the label.";
  std::vector<PromptBody> out;
  out.push_back({instruction + "\nDocument: {text}", "simple instruction"});
  out.push_back({"Document: {text}\n" + instruction,
                 "simple instruction placed after the document"});
  out.push_back({"Below is a " + subject + ". Sometimes the " + subject +
                     " can get heated and have toxic comments. Toxic comments can "
                     "contain curse words, can sound condescending, can be mean to "
                     "others, or can make people feel angry without using offensive "
                     "words.\n" +
                     instruction + "\nDocument: {text}",
                 "detailed instruction"});
  out.push_back(
      {instruction +
           "\n\nDocument: This code is a disaster and whoever wrote it should "
           "quit.\nLabel: toxic\n\nDocument: Thanks for the review, I pushed a fix "
           "for the failing test.\nLabel: non-toxic\n\nDocument: {text}\nLabel:",
       "simple instruction plus two few-shot examples; the example documents are "
       "synthetic placeholders"});
  return out;
}

void register_prompts(const fs::path& registry_root, const std::string& prompt_id,
                      const std::string& subject) {
  prompts::PromptRegistry registry(registry_root);
  if (!registry.versions(prompt_id).empty()) {
    std::cerr << "prompt " << prompt_id << " already registered, skipping\n";
    return;
  }
  int day = 5;
  int version = 0;
  for (const auto& entry : prompt_bodies(subject)) {
    prompts::PromptTemplate tmpl;
    tmpl.prompt_id = prompt_id;
    tmpl.mode = prompts::PromptMode::COMPLETION;
    tmpl.body = entry.body;
    tmpl.notes = entry.notes;
    tmpl.created_at = "2026-01-" + pad(day, 2) + "T00:00:00Z";
    if (version > 0) {
      tmpl.parent_version = version;
    }
    version = registry.register_prompt(tmpl);
    ++day;
  }
}

void write_slices(const fs::path& path) {
  json slices = json::array();
  slices.push_back({{"name", "toxic-politics"},
                    {"gold", "toxic"},
                    {"meta", {{"trigger", "politics"}}}});
  slices.push_back(
      {{"name", "toxic-code"}, {"gold", "toxic"}, {"meta", {{"target", "code"}}}});
  slices.push_back(
      {{"name", "toxic-severe"}, {"gold", "toxic"}, {"meta", {{"severe", true}}}});
  write_file(path, json{{"slices", slices}}.dump(2) + "\n");
}

void write_suites(const fs::path& dir) {
  auto base = [](const std::string& suite_id) {
    return json{{"suite_id", suite_id},
                {"dataset_id", "suitefix-260"},
                {"positive_label", "pos"},
                {"metadata_keys", json::array({"segment", "rare"})},
                {"baseline", json::object()}};
  };

  json all_pass = base("suitefix-all-pass");
  all_pass["tests"] = json::array(
      {{{"name", "overall-accuracy"},
        {"slice", "whole_dataset"},
        {"metric", "accuracy"},
        {"delta", 0.05},
        {"alpha", 0.05},
        {"min_n", 30}},
       {{"name", "core-accuracy"},
        {"slice", {{"meta", {{"segment", "core"}}}}},
        {"metric", "accuracy"},
        {"delta", 0.05},
        {"alpha", 0.05},
        {"min_n", 50}},
       {{"name", "core-f1"},
        {"slice", {{"meta", {{"segment", "core"}}}}},
        {"metric", "f1"},
        {"delta", 0.05},
        {"alpha", 0.05},
        {"min_n", 50}}});
  write_file(dir / "all_pass.suite.json", all_pass.dump(2) + "\n");

  json one_fail = base("suitefix-one-fail");
  one_fail["tests"] = json::array(
      {{{"name", "core-accuracy"},
        {"slice", {{"meta", {{"segment", "core"}}}}},
        {"metric", "accuracy"},
        {"delta", 0.05},
        {"alpha", 0.05},
        {"min_n", 50}},
       {{"name", "tail-accuracy"},
        {"slice", {{"meta", {{"segment", "tail"}}}}},
        {"metric", "accuracy"},
        {"delta", 0.05},
        {"alpha", 0.05},
        {"min_n", 30}},
       {{"name", "core-regression-rate"},
        {"slice", {{"meta", {{"segment", "core"}}}}},
        {"metric", "regression_rate"},
        {"delta", 0.25},
        {"alpha", 0.05},
        {"min_n", 50}}});
  write_file(dir / "one_fail.suite.json", one_fail.dump(2) + "\n");

  json undersized = base("suitefix-undersized");
  undersized["tests"] = json::array(
      {{{"name", "overall-accuracy"},
        {"slice", "whole_dataset"},
        {"metric", "accuracy"},
        {"delta", 0.05},
        {"alpha", 0.05},
        {"min_n", 30}},
       {{"name", "rare-slice"},
        {"slice", {{"meta", {{"rare", true}}}}},
        {"metric", "accuracy"},
        {"delta", 0.05},
        {"alpha", 0.05},
        {"min_n", 30}}});
  write_file(dir / "undersized.suite.json", undersized.dump(2) + "\n");
}

void write_driftsim(const fs::path& dir) {
  json slice_core = {{"name", "core"}, {"meta", {{"segment", "core"}}}};
  json base_spec = {{"model_name", "synthetic-base"},
                    {"seed", 1},
                    {"base_accuracy", 0.8},
                    {"per_slice_accuracy", json::array()},
                    {"kappa", 0.3}};

  write_file(dir / "null_drift.json",
             json{{"base", base_spec}, {"deltas", json::array()}}.dump(2) + "\n");
  write_file(dir / "slice_drop_10pt.json",
             json{{"base", base_spec},
                  {"deltas", json::array({{{"slice", slice_core}, {"delta", -0.10}}})}}
                     .dump(2) +
                 "\n");
  write_file(dir / "test_core_accuracy.json",
             json{{"name", "core-accuracy"},
                  {"slice", {{"meta", {{"segment", "core"}}}}},
                  {"metric", "accuracy"},
                  {"delta", 0.05},
                  {"alpha", 0.05},
                  {"min_n", 1}}
                     .dump(2) +
                 "\n");
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? argv[1] : "fixtures";
  try {
    datasets::save_dataset(civil_comments(), root / "datasets" / "civil_comments_1k.jsonl");
    datasets::save_dataset(github_discussions(),
                           root / "datasets" / "github_discussions_174.jsonl");
    datasets::save_dataset(suite_fixture(), root / "datasets" / "suitefix_260.jsonl");
    register_prompts(root / "prompts", "toxicity-github", "GitHub discussion");
    register_prompts(root / "prompts", "toxicity-civil", "comment");
    write_slices(root / "slices" / "github_fig3.json");
    write_suites(root / "suites");
    write_driftsim(root / "driftsim");
  } catch (const std::exception& ex) {
    std::cerr << "fixture generation failed: " << ex.what() << "\n";
    return 1;
  }
  std::cout << "fixtures written under " << root.string() << "\n";
  return 0;
}
