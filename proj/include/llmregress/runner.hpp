#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "llmregress/datasets.hpp"
#include "llmregress/prompts.hpp"
#include "llmregress/providers.hpp"

namespace llmregress::runner {

using core::ContentHash;
using core::Label;
using datasets::Dataset;
using providers::ModelRef;
using providers::SamplingParams;

inline constexpr const char* kToolVersion = "llmregress 0.1.0";
inline constexpr const char* kDefaultParseRule = "token-longest-first-v1";

// Everything that identifies a run. run_id = hash of the canonical form, so
// any field change (and nothing else) produces a new run.
struct RunConfig {
  ModelRef model;
  std::string prompt_id;
  int prompt_version = 0;
  std::string dataset_id;
  ContentHash dataset_digest;
  SamplingParams params;
  std::string parse_rule = kDefaultParseRule;
  std::string seed_note;

  nlohmann::json canonical_form() const;
  ContentHash run_id() const;
  static RunConfig from_json(const nlohmann::json& j);
};

struct SampleRecord {
  int sample_index = 0;
  std::string raw_text;
  std::optional<Label> parsed;  // nullopt = UNPARSED
  int latency_ms = 0;
  providers::Usage usage;
};

enum class RunStatus { COMPLETE, PARTIAL };

struct RunRecord {
  ContentHash run_id;
  RunConfig config;
  // example_id -> samples ordered by sample_index (exactly n when complete)
  std::map<std::string, std::vector<SampleRecord>> samples;
  std::string started_at;
  std::string finished_at;
  RunStatus status = RunStatus::PARTIAL;

  const std::vector<SampleRecord>& samples_for(const std::string& example_id) const;
};

// Layout: runs/<run_id>/{config.rec, samples.recl, status, meta.rec}.
// samples.recl holds one record per (example_id, sample_index) in canonical
// (id-sorted, then index) order; meta.rec keeps timestamps and tool version
// outside the hashed record.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path run_dir(const ContentHash& run_id) const;

  bool exists(const ContentHash& run_id) const;
  std::optional<RunStatus> status(const ContentHash& run_id) const;

  // Loads and validates: dataset digest must match the stored config, stored
  // parsed labels must equal parse_label(raw_text) recomputed under the
  // config's rule.
  RunRecord load(const ContentHash& run_id, const Dataset& dataset) const;

  RunConfig load_config(const ContentHash& run_id) const;
  std::vector<ContentHash> list_runs() const;

 private:
  std::filesystem::path root_;
};

struct RunOptions {
  int parallelism = 8;
  std::string tool_version = kToolVersion;
};

// Persists an in-memory record (imported or synthesized samples) in the
// canonical on-disk layout, replacing any existing journal for that run_id.
void persist_run_record(const RunStore& store, const RunRecord& record);

// Executes (or resumes) the run described by `config`. Only missing
// (example, sample_index) pairs are fetched; samples already journaled are
// kept verbatim. Throws PROVIDER_FAILURE with the run left partial and
// resumable if the upstream fails.
RunRecord execute_run(const RunConfig& config, const Dataset& dataset,
                      const prompts::PromptRegistry& registry,
                      const providers::Provider& upstream,
                      const providers::ReplayStore& replay, const RunStore& store,
                      const RunOptions& options = {});

struct MatrixCell {
  ModelRef model;
  std::string prompt_id;
  int prompt_version = 0;
  std::optional<ContentHash> run_id;
  std::string status;  // complete | partial | error
  std::string error;
};

struct MatrixIndex {
  ContentHash matrix_id;
  std::string dataset_id;
  ContentHash dataset_digest;
  SamplingParams params;
  std::vector<MatrixCell> cells;
  std::string generated_at;
  std::string tool_version = kToolVersion;

  nlohmann::json to_json() const;
  static MatrixIndex from_json(const nlohmann::json& j);
};

// One run per (model, prompt) cell over a shared dataset and params profile.
// A failing cell is recorded in the index; the others still complete. The
// index is persisted under matrices/<matrix_id>/index.rec in the run store.
MatrixIndex run_matrix(const std::vector<ModelRef>& models,
                       const std::vector<std::pair<std::string, int>>& prompt_versions,
                       const Dataset& dataset, const SamplingParams& params,
                       const prompts::PromptRegistry& registry,
                       const providers::Provider& upstream,
                       const providers::ReplayStore& replay, const RunStore& store,
                       const RunOptions& options = {});

MatrixIndex load_matrix(const RunStore& store, const ContentHash& matrix_id);

std::string now_iso8601();

}  // namespace llmregress::runner
