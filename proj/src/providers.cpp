#include "llmregress/providers.hpp"

#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace llmregress::providers {

namespace {

using nlohmann::json;

std::string env_or(const char* name, const std::string& fallback) {
  const char* value = std::getenv(name);
  return value ? std::string(value) : fallback;
}

// mutex/cv semaphore so the in-flight bound is a runtime option
class Gate {
 public:
  explicit Gate(int limit) : limit_(limit > 0 ? limit : 1) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
  }
  void release() {
    std::lock_guard lock(mu_);
    --active_;
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int active_ = 0;
};

struct GateGuard {
  explicit GateGuard(Gate& gate) : gate_(gate) { gate_.acquire(); }
  ~GateGuard() { gate_.release(); }
  Gate& gate_;
};

// httplib wants (scheme://host:port, path-prefix) separately.
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = base_url.find('/', host_start);
  if (path_start == std::string::npos) {
    return {base_url, ""};
  }
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') {
    prefix.pop_back();
  }
  return {base_url.substr(0, path_start), prefix};
}

}  // namespace

nlohmann::json ModelRef::canonical_form() const {
  return json{{"provider", provider},
              {"model_name", model_name},
              {"endpoint_type", prompt_mode_name(endpoint_type)}};
}

ModelRef ModelRef::from_json(const nlohmann::json& j) {
  ModelRef out;
  out.provider = j.at("provider").get<std::string>();
  out.model_name = j.at("model_name").get<std::string>();
  out.endpoint_type = prompts::prompt_mode_from_name(j.at("endpoint_type").get<std::string>());
  out.snapshot_note = j.value("snapshot_note", "");
  return out;
}

SamplingParams SamplingParams::point_prediction() {
  return SamplingParams{0.0, 1, 8, {}};
}

SamplingParams SamplingParams::confidence_profile() {
  return SamplingParams{0.7, 20, 8, {}};
}

void SamplingParams::validate() const {
  if (temperature < 0.0) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "temperature must be >= 0");
  }
  if (n_samples < 1) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "n_samples must be >= 1");
  }
  if (max_tokens < 1) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "max_tokens must be >= 1");
  }
}

nlohmann::json SamplingParams::canonical_form() const {
  json j = {{"temperature", temperature},
            {"n_samples", n_samples},
            {"max_tokens", max_tokens}};
  j["stop_sequences"] = stop_sequences;
  return j;
}

SamplingParams SamplingParams::from_json(const nlohmann::json& j) {
  SamplingParams out;
  out.temperature = j.at("temperature").get<double>();
  out.n_samples = j.value("n_samples", j.value("n", 1));
  out.max_tokens = j.value("max_tokens", 8);
  if (j.contains("stop_sequences")) {
    out.stop_sequences = j.at("stop_sequences").get<std::vector<std::string>>();
  } else if (j.contains("stop")) {
    out.stop_sequences = j.at("stop").get<std::vector<std::string>>();
  }
  out.validate();
  return out;
}

std::string serialize_request(const ModelRef& model, const RenderedPrompt& prompt,
                              const SamplingParams& params) {
  if (prompt.mode != model.endpoint_type) {
    throw Error(ErrorCode::ENDPOINT_MISMATCH,
                "rendered prompt mode does not match model endpoint type");
  }
  json body;
  body["model"] = model.model_name;
  body["temperature"] = params.temperature;
  body["max_tokens"] = params.max_tokens;
  body["n"] = params.n_samples;
  if (!params.stop_sequences.empty()) {
    body["stop"] = params.stop_sequences;
  }
  if (prompt.mode == PromptMode::COMPLETION) {
    body["prompt"] = prompt.completion_text;
  } else {
    json messages = json::array();
    for (const auto& m : prompt.messages) {
      messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    body["messages"] = std::move(messages);
  }
  return body.dump();
}

std::string endpoint_path(const ModelRef& model) {
  return model.endpoint_type == PromptMode::COMPLETION ? "/completions"
                                                       : "/chat/completions";
}

const char* replay_mode_name(ReplayMode mode) {
  switch (mode) {
    case ReplayMode::RECORD: return "record";
    case ReplayMode::REPLAY: return "replay";
    case ReplayMode::PASSTHROUGH: return "passthrough";
  }
  return "unknown";
}

ReplayMode replay_mode_from_name(const std::string& name) {
  if (name == "record") return ReplayMode::RECORD;
  if (name == "replay") return ReplayMode::REPLAY;
  if (name == "passthrough") return ReplayMode::PASSTHROUGH;
  throw Error(ErrorCode::INVALID_ARGUMENT, "unknown replay mode '" + name + "'");
}

ReplayStore::ReplayStore(std::filesystem::path location, ReplayMode mode)
    : location_(std::move(location)), mode_(mode) {
  if (mode_ != ReplayMode::REPLAY) {
    std::filesystem::create_directories(location_);
  }
}

ContentHash ReplayStore::key(const ModelRef& model, const RenderedPrompt& prompt,
                             const SamplingParams& params, int sample_index) {
  json j = {{"kind", "replay-key"},
            {"model", model.canonical_form()},
            {"prompt", prompt.canonical_form()},
            {"params", params.canonical_form()},
            {"sample_index", sample_index}};
  return core::hash_json(j);
}

std::filesystem::path ReplayStore::shard_path(const ContentHash& key) const {
  return location_ / key.digest.substr(0, 2) / (key.digest + ".rec");
}

std::optional<SampleResponse> ReplayStore::lookup(const ContentHash& key) const {
  auto path = shard_path(key);
  std::ifstream in(path);
  if (!in) {
    return std::nullopt;
  }
  json record = json::parse(in, nullptr, false);
  if (record.is_discarded()) {
    throw Error(ErrorCode::RECORD_CORRUPT, "unparsable replay record " + path.string());
  }
  SampleResponse response;
  response.sample_index = record.at("sample_index").get<int>();
  response.raw_text = record.at("raw_text").get<std::string>();
  response.finish_reason = record.value("finish_reason", "");
  response.usage.prompt_tokens = record.at("usage").value("prompt_tokens", 0);
  response.usage.completion_tokens = record.at("usage").value("completion_tokens", 0);
  response.latency_ms = record.value("latency_ms", 0);
  return response;
}

void ReplayStore::store(const ContentHash& key, const ModelRef& model,
                        const RenderedPrompt& prompt, const SamplingParams& params,
                        const SampleResponse& response) const {
  auto path = shard_path(key);
  if (std::filesystem::exists(path)) {
    return;  // idempotent
  }
  std::filesystem::create_directories(path.parent_path());
  json record = {{"key", key.to_string()},
                 {"model", model.canonical_form()},
                 {"prompt", prompt.canonical_form()},
                 {"params", params.canonical_form()},
                 {"sample_index", response.sample_index},
                 {"raw_text", response.raw_text},
                 {"finish_reason", response.finish_reason},
                 {"usage",
                  {{"prompt_tokens", response.usage.prompt_tokens},
                   {"completion_tokens", response.usage.completion_tokens}}},
                 {"latency_ms", response.latency_ms}};
  // temp-file + rename keeps concurrent writers of the same key safe
  auto tmp = path;
  tmp += ".tmp." + std::to_string(
      std::hash<std::thread::id>{}(std::this_thread::get_id()) & 0xffff);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorCode::IO_ERROR, "cannot write replay record " + tmp.string());
    }
    out << record.dump() << "\n";
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec && !std::filesystem::exists(path)) {
    throw Error(ErrorCode::IO_ERROR, "cannot commit replay record " + path.string());
  }
  std::filesystem::remove(tmp, ec);
}

std::vector<SampleResponse> complete_indices(const Provider& upstream,
                                             const ModelRef& model,
                                             const RenderedPrompt& prompt,
                                             const SamplingParams& params,
                                             const ReplayStore& replay,
                                             const std::vector<int>& indices) {
  params.validate();
  if (prompt.mode != model.endpoint_type) {
    throw Error(ErrorCode::ENDPOINT_MISMATCH,
                "prompt mode '" + std::string(prompt_mode_name(prompt.mode)) +
                    "' does not match endpoint type '" +
                    prompt_mode_name(model.endpoint_type) + "' of " + model.model_name);
  }
  for (int idx : indices) {
    if (idx < 0 || idx >= params.n_samples) {
      throw Error(ErrorCode::INVALID_ARGUMENT,
                  "sample index " + std::to_string(idx) + " outside [0, n)");
    }
  }

  std::vector<SampleResponse> out;
  out.reserve(indices.size());
  std::vector<int> missing;
  std::vector<std::size_t> missing_slots;
  for (std::size_t slot = 0; slot < indices.size(); ++slot) {
    const int i = indices[slot];
    if (replay.mode() == ReplayMode::PASSTHROUGH) {
      out.emplace_back();
      missing.push_back(i);
      missing_slots.push_back(slot);
      continue;
    }
    auto key = ReplayStore::key(model, prompt, params, i);
    if (auto hit = replay.lookup(key)) {
      hit->sample_index = i;
      out.push_back(std::move(*hit));
    } else if (replay.mode() == ReplayMode::REPLAY) {
      throw Error(ErrorCode::REPLAY_MISS,
                  "no recorded sample " + std::to_string(i) + " for " +
                      model.model_name + " under key " + key.digest.substr(0, 12));
    } else {
      out.emplace_back();
      missing.push_back(i);
      missing_slots.push_back(slot);
    }
  }

  if (!missing.empty()) {
    auto fetched = upstream.fetch(model, prompt, params, missing);
    if (fetched.size() != missing.size()) {
      throw Error(ErrorCode::PROVIDER_FAILURE,
                  "provider returned " + std::to_string(fetched.size()) +
                      " samples for " + std::to_string(missing.size()) + " requested");
    }
    for (std::size_t i = 0; i < missing.size(); ++i) {
      SampleResponse response = std::move(fetched[i]);
      response.sample_index = missing[i];
      if (replay.mode() == ReplayMode::RECORD) {
        auto key = ReplayStore::key(model, prompt, params, missing[i]);
        replay.store(key, model, prompt, params, response);
      }
      out[missing_slots[i]] = std::move(response);
    }
  }
  return out;
}

std::vector<SampleResponse> complete(const Provider& upstream, const ModelRef& model,
                                     const RenderedPrompt& prompt,
                                     const SamplingParams& params,
                                     const ReplayStore& replay) {
  std::vector<int> all(static_cast<std::size_t>(params.n_samples));
  for (int i = 0; i < params.n_samples; ++i) {
    all[static_cast<std::size_t>(i)] = i;
  }
  return complete_indices(upstream, model, prompt, params, replay, all);
}

struct HttpProvider::Impl {
  HttpProviderOptions options;
  mutable Gate gate{8};
  mutable std::mutex rng_mu;
  mutable std::mt19937_64 rng;

  explicit Impl(HttpProviderOptions opts) : options(std::move(opts)), gate(options.max_inflight) {
    if (options.base_url.empty()) {
      options.base_url = env_or("LLMREGRESS_BASE_URL", "");
    }
    if (options.api_key.empty()) {
      options.api_key = env_or("LLMREGRESS_API_KEY", "");
    }
    if (!options.sleep_fn) {
      options.sleep_fn = [](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
      };
    }
    std::uint64_t seed = options.jitter_seed
                             ? options.jitter_seed
                             : core::hash64("jitter|" + options.base_url);
    rng.seed(seed);
  }

  std::chrono::milliseconds backoff_delay(int attempt) const {
    std::uint64_t draw;
    {
      std::lock_guard lock(rng_mu);
      draw = rng();
    }
    auto base = options.base_backoff.count() * (1LL << attempt);
    auto jitter = static_cast<long long>(draw % static_cast<std::uint64_t>(base + 1));
    return std::chrono::milliseconds(base + jitter);
  }
};

HttpProvider::HttpProvider(HttpProviderOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

HttpProvider::~HttpProvider() = default;

std::vector<SampleResponse> HttpProvider::fetch(const ModelRef& model,
                                                const RenderedPrompt& prompt,
                                                const SamplingParams& params,
                                                const std::vector<int>& indices) const {
  if (impl_->options.base_url.empty()) {
    throw Error(ErrorCode::INVALID_ARGUMENT,
                "no base URL configured (set LLMREGRESS_BASE_URL or provider config)");
  }
  auto [host, prefix] = split_base_url(impl_->options.base_url);
  const std::string path = prefix + endpoint_path(model);

  std::vector<SampleResponse> gathered;
  int wanted = static_cast<int>(indices.size());

  while (static_cast<int>(gathered.size()) < wanted) {
    SamplingParams batch = params;
    batch.n_samples = wanted - static_cast<int>(gathered.size());
    const std::string body = serialize_request(model, prompt, batch);

    httplib::Result res;
    int attempt = 0;
    while (true) {
      {
        GateGuard guard(impl_->gate);
        httplib::Client client(host);
        client.set_connection_timeout(30, 0);
        client.set_read_timeout(120, 0);
        httplib::Headers headers;
        if (!impl_->options.api_key.empty()) {
          headers.emplace("Authorization", "Bearer " + impl_->options.api_key);
        }
        auto started = std::chrono::steady_clock::now();
        res = client.Post(path, headers, body, "application/json");
        if (res && res->status < 400) {
          auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
              std::chrono::steady_clock::now() - started);
          json payload = json::parse(res->body, nullptr, false);
          if (payload.is_discarded() || !payload.contains("choices")) {
            throw Error(ErrorCode::HTTP_ERROR,
                        "unparsable response from " + host + path);
          }
          for (const auto& choice : payload.at("choices")) {
            SampleResponse sample;
            if (model.endpoint_type == PromptMode::COMPLETION) {
              sample.raw_text = choice.value("text", "");
            } else {
              sample.raw_text =
                  choice.contains("message") ? choice.at("message").value("content", "") : "";
            }
            if (choice.contains("finish_reason") && !choice.at("finish_reason").is_null()) {
              sample.finish_reason = choice.at("finish_reason").get<std::string>();
            }
            if (payload.contains("usage")) {
              sample.usage.prompt_tokens = payload.at("usage").value("prompt_tokens", 0);
              sample.usage.completion_tokens =
                  payload.at("usage").value("completion_tokens", 0);
            }
            sample.latency_ms = static_cast<int>(elapsed.count());
            gathered.push_back(std::move(sample));
            if (static_cast<int>(gathered.size()) == wanted) {
              break;
            }
          }
          break;
        }
      }
      // failure path: retry on rate limits / 5xx / transport errors
      bool retryable = !res || res->status == 429 || res->status >= 500;
      ++attempt;
      if (!retryable || attempt >= impl_->options.max_attempts) {
        if (res && res->status == 429) {
          throw Error(ErrorCode::RATE_LIMITED,
                      "rate limited by " + host + path + " after " +
                          std::to_string(attempt) + " attempts");
        }
        if (res) {
          throw Error(ErrorCode::HTTP_ERROR,
                      "HTTP " + std::to_string(res->status) + " from " + host + path +
                          ": " + res->body.substr(0, 200));
        }
        throw Error(ErrorCode::HTTP_ERROR,
                    "transport failure talking to " + host + path);
      }
      impl_->options.sleep_fn(impl_->backoff_delay(attempt - 1));
    }
  }

  for (std::size_t i = 0; i < gathered.size(); ++i) {
    gathered[i].sample_index = indices[i];
  }
  return gathered;
}

}  // namespace llmregress::providers
