#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "llmregress/core.hpp"
#include "llmregress/prompts.hpp"

namespace llmregress::providers {

using core::ContentHash;
using prompts::PromptMode;
using prompts::RenderedPrompt;

struct ModelRef {
  std::string provider;
  std::string model_name;
  PromptMode endpoint_type = PromptMode::COMPLETION;
  std::string snapshot_note;  // free text, excluded from hashing

  // (provider, model_name, endpoint_type) is the identity used in run hashing
  // and replay keys; snapshot_note never participates.
  nlohmann::json canonical_form() const;
  static ModelRef from_json(const nlohmann::json& j);
};

struct SamplingParams {
  double temperature = 0.0;
  int n_samples = 1;
  int max_tokens = 8;
  std::vector<std::string> stop_sequences;

  static SamplingParams point_prediction();   // t=0, n=1
  static SamplingParams confidence_profile(); // t=0.7, n=20

  nlohmann::json canonical_form() const;
  static SamplingParams from_json(const nlohmann::json& j);
  void validate() const;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct SampleResponse {
  int sample_index = 0;
  std::string raw_text;
  std::string finish_reason;
  Usage usage;
  int latency_ms = 0;
};

// OpenAI-compatible JSON body for one request. Canonical: the same logical
// request always serializes to identical bytes.
std::string serialize_request(const ModelRef& model, const RenderedPrompt& prompt,
                              const SamplingParams& params);

// "/completions" or "/chat/completions" for the model's endpoint type.
std::string endpoint_path(const ModelRef& model);

// Upstream sample source. Implementations must be thread-safe.
class Provider {
 public:
  virtual ~Provider() = default;

  // Returns one response per requested index, in the given order, with
  // sample_index set from `indices`.
  virtual std::vector<SampleResponse> fetch(const ModelRef& model,
                                            const RenderedPrompt& prompt,
                                            const SamplingParams& params,
                                            const std::vector<int>& indices) const = 0;
};

enum class ReplayMode { RECORD, REPLAY, PASSTHROUGH };

const char* replay_mode_name(ReplayMode mode);
ReplayMode replay_mode_from_name(const std::string& name);

// Content-addressed response archive: replay/<2-char shard>/<hash>.rec.
// Key = hash(model identity, rendered prompt, params, sample_index). In
// replay mode a miss is an error, never a network call.
class ReplayStore {
 public:
  ReplayStore(std::filesystem::path location, ReplayMode mode);

  ReplayMode mode() const { return mode_; }
  const std::filesystem::path& location() const { return location_; }

  static ContentHash key(const ModelRef& model, const RenderedPrompt& prompt,
                         const SamplingParams& params, int sample_index);

  std::optional<SampleResponse> lookup(const ContentHash& key) const;
  // Idempotent: writing an existing key is a no-op.
  void store(const ContentHash& key, const ModelRef& model,
             const RenderedPrompt& prompt, const SamplingParams& params,
             const SampleResponse& response) const;

 private:
  std::filesystem::path shard_path(const ContentHash& key) const;

  std::filesystem::path location_;
  ReplayMode mode_;
};

// Fetches params.n_samples responses ordered by sample_index, routed through
// the replay store per its mode. Record mode consults the store first and
// fetches only missing indices from `upstream`, persisting each before return.
std::vector<SampleResponse> complete(const Provider& upstream, const ModelRef& model,
                                     const RenderedPrompt& prompt,
                                     const SamplingParams& params,
                                     const ReplayStore& replay);

// Same contract restricted to the given sample indices (each in
// [0, params.n_samples)), ascending. Replay keys are unchanged, so a resumed
// run addresses exactly the samples a full run would.
std::vector<SampleResponse> complete_indices(const Provider& upstream,
                                             const ModelRef& model,
                                             const RenderedPrompt& prompt,
                                             const SamplingParams& params,
                                             const ReplayStore& replay,
                                             const std::vector<int>& indices);

struct HttpProviderOptions {
  std::string base_url;           // falls back to $LLMREGRESS_BASE_URL
  std::string api_key;            // falls back to $LLMREGRESS_API_KEY
  int max_attempts = 5;           // per request, on 429/5xx
  int max_inflight = 8;
  std::chrono::milliseconds base_backoff{200};
  std::uint64_t jitter_seed = 0;  // 0 -> derived from base_url
  // Injectable for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep_fn;
};

// Client for OpenAI-compatible completion/chat endpoints with bounded
// concurrency and exponential backoff.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderOptions options);
  ~HttpProvider() override;

  std::vector<SampleResponse> fetch(const ModelRef& model,
                                    const RenderedPrompt& prompt,
                                    const SamplingParams& params,
                                    const std::vector<int>& indices) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace llmregress::providers
