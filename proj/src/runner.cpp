#include "llmregress/runner.hpp"

#include <chrono>
#include <deque>
#include <fstream>
#include <future>

#include <nlohmann/json.hpp>

#include "llmregress/fslock.hpp"

namespace llmregress::runner {

namespace {

using nlohmann::json;

json sample_to_json(const std::string& example_id, const SampleRecord& sample) {
  return json{{"example_id", example_id},
              {"sample_index", sample.sample_index},
              {"raw_text", sample.raw_text},
              {"parsed", sample.parsed ? json(sample.parsed->name()) : json(nullptr)},
              {"latency_ms", sample.latency_ms},
              {"usage",
               {{"prompt_tokens", sample.usage.prompt_tokens},
                {"completion_tokens", sample.usage.completion_tokens}}}};
}

std::pair<std::string, SampleRecord> sample_from_json(const json& j) {
  SampleRecord sample;
  sample.sample_index = j.at("sample_index").get<int>();
  sample.raw_text = j.at("raw_text").get<std::string>();
  if (!j.at("parsed").is_null()) {
    sample.parsed = Label(j.at("parsed").get<std::string>());
  }
  sample.latency_ms = j.at("latency_ms").get<int>();
  sample.usage.prompt_tokens = j.at("usage").value("prompt_tokens", 0);
  sample.usage.completion_tokens = j.at("usage").value("completion_tokens", 0);
  return {j.at("example_id").get<std::string>(), std::move(sample)};
}

void write_status(const std::filesystem::path& dir, RunStatus status) {
  std::ofstream out(dir / "status", std::ios::binary | std::ios::trunc);
  out << (status == RunStatus::COMPLETE ? "complete" : "partial") << "\n";
}

}  // namespace

std::string now_iso8601() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json RunConfig::canonical_form() const {
  return json{{"kind", "run-config"},
              {"model", model.canonical_form()},
              {"prompt_id", prompt_id},
              {"prompt_version", prompt_version},
              {"dataset_id", dataset_id},
              {"dataset_digest", dataset_digest.to_string()},
              {"params", params.canonical_form()},
              {"parse_rule", parse_rule},
              {"seed_note", seed_note}};
}

ContentHash RunConfig::run_id() const {
  return core::hash_json(canonical_form());
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig config;
  config.model = ModelRef::from_json(j.at("model"));
  config.prompt_id = j.at("prompt_id").get<std::string>();
  config.prompt_version = j.at("prompt_version").get<int>();
  config.dataset_id = j.at("dataset_id").get<std::string>();
  config.dataset_digest = ContentHash::parse(j.at("dataset_digest").get<std::string>());
  config.params = SamplingParams::from_json(j.at("params"));
  config.parse_rule = j.value("parse_rule", kDefaultParseRule);
  config.seed_note = j.value("seed_note", "");
  return config;
}

const std::vector<SampleRecord>& RunRecord::samples_for(
    const std::string& example_id) const {
  auto it = samples.find(example_id);
  if (it == samples.end()) {
    throw Error(ErrorCode::UNKNOWN_EXAMPLE,
                "run " + run_id.digest.substr(0, 12) + " has no samples for '" +
                    example_id + "'");
  }
  return it->second;
}

RunStore::RunStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_ / "runs");
  std::filesystem::create_directories(root_ / "matrices");
}

std::filesystem::path RunStore::run_dir(const ContentHash& run_id) const {
  return root_ / "runs" / run_id.digest;
}

bool RunStore::exists(const ContentHash& run_id) const {
  return std::filesystem::exists(run_dir(run_id) / "config.rec");
}

std::optional<RunStatus> RunStore::status(const ContentHash& run_id) const {
  std::ifstream in(run_dir(run_id) / "status");
  if (!in) {
    return std::nullopt;
  }
  std::string word;
  in >> word;
  if (word == "complete") return RunStatus::COMPLETE;
  if (word == "partial") return RunStatus::PARTIAL;
  throw Error(ErrorCode::RECORD_CORRUPT,
              "bad status '" + word + "' for run " + run_id.digest.substr(0, 12));
}

RunConfig RunStore::load_config(const ContentHash& run_id) const {
  std::ifstream in(run_dir(run_id) / "config.rec");
  if (!in) {
    throw Error(ErrorCode::UNKNOWN_RUN, "no run " + run_id.digest.substr(0, 12));
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::RECORD_CORRUPT,
                "unparsable config for run " + run_id.digest.substr(0, 12));
  }
  return RunConfig::from_json(j);
}

RunRecord RunStore::load(const ContentHash& run_id, const Dataset& dataset) const {
  RunRecord record;
  record.run_id = run_id;
  record.config = load_config(run_id);
  if (record.config.dataset_digest != dataset.digest()) {
    throw Error(ErrorCode::DIGEST_MISMATCH,
                "run " + run_id.digest.substr(0, 12) + " was produced for dataset '" +
                    record.config.dataset_id + "' digest " +
                    record.config.dataset_digest.digest.substr(0, 12) +
                    ", not this dataset");
  }

  prompts::LabelParseRule rule{dataset.label_set(), record.config.parse_rule};
  std::ifstream in(run_dir(run_id) / "samples.recl");
  std::string line;
  while (in && std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCode::RECORD_CORRUPT,
                  "unparsable sample line in run " + run_id.digest.substr(0, 12));
    }
    auto [example_id, sample] = sample_from_json(j);
    auto recomputed = prompts::parse_label(sample.raw_text, rule);
    if (recomputed != sample.parsed) {
      throw Error(ErrorCode::RECORD_CORRUPT,
                  "stored parse disagrees with recomputation for example '" +
                      example_id + "' in run " + run_id.digest.substr(0, 12));
    }
    record.samples[example_id].push_back(std::move(sample));
  }

  auto stored_status = status(run_id);
  record.status = stored_status.value_or(RunStatus::PARTIAL);
  if (record.status == RunStatus::COMPLETE) {
    const int n = record.config.params.n_samples;
    if (record.samples.size() != dataset.size()) {
      throw Error(ErrorCode::RECORD_CORRUPT,
                  "complete run covers " + std::to_string(record.samples.size()) +
                      " of " + std::to_string(dataset.size()) + " examples");
    }
    for (const auto& [eid, samples] : record.samples) {
      if (static_cast<int>(samples.size()) != n) {
        throw Error(ErrorCode::RECORD_CORRUPT,
                    "complete run has " + std::to_string(samples.size()) +
                        " samples for '" + eid + "', expected " + std::to_string(n));
      }
    }
  }

  std::ifstream meta_in(run_dir(run_id) / "meta.rec");
  if (meta_in) {
    json meta = json::parse(meta_in, nullptr, false);
    if (!meta.is_discarded()) {
      record.started_at = meta.value("started_at", "");
      record.finished_at = meta.value("finished_at", "");
    }
  }
  return record;
}

std::vector<ContentHash> RunStore::list_runs() const {
  std::vector<ContentHash> out;
  std::error_code ec;
  for (const auto& entry :
       std::filesystem::directory_iterator(root_ / "runs", ec)) {
    if (entry.is_directory()) {
      out.push_back(ContentHash{"sha256", entry.path().filename().string()});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const ContentHash& a, const ContentHash& b) { return a.digest < b.digest; });
  return out;
}

void persist_run_record(const RunStore& store, const RunRecord& record) {
  const ContentHash run_id = record.config.run_id();
  const auto dir = store.run_dir(run_id);
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.rec", std::ios::binary | std::ios::trunc);
    out << core::canonical_json(record.config.canonical_form()) << "\n";
  }
  {
    std::ofstream out(dir / "samples.recl", std::ios::binary | std::ios::trunc);
    for (const auto& [example_id, samples] : record.samples) {
      std::vector<const SampleRecord*> ordered;
      ordered.reserve(samples.size());
      for (const auto& sample : samples) {
        ordered.push_back(&sample);
      }
      std::sort(ordered.begin(), ordered.end(),
                [](const SampleRecord* a, const SampleRecord* b) {
                  return a->sample_index < b->sample_index;
                });
      for (const SampleRecord* sample : ordered) {
        out << core::canonical_json(sample_to_json(example_id, *sample)) << "\n";
      }
    }
  }
  {
    json meta = {{"run_id", run_id.to_string()},
                 {"started_at", record.started_at},
                 {"finished_at", record.finished_at},
                 {"tool_version", kToolVersion}};
    std::ofstream out(dir / "meta.rec", std::ios::binary | std::ios::trunc);
    out << meta.dump() << "\n";
  }
  write_status(dir, record.status);
}

RunRecord execute_run(const RunConfig& config, const Dataset& dataset,
                      const prompts::PromptRegistry& registry,
                      const providers::Provider& upstream,
                      const providers::ReplayStore& replay, const RunStore& store,
                      const RunOptions& options) {
  config.params.validate();
  if (config.dataset_id != dataset.id() || config.dataset_digest != dataset.digest()) {
    throw Error(ErrorCode::DIGEST_MISMATCH,
                "config names dataset '" + config.dataset_id + "' digest " +
                    config.dataset_digest.digest.substr(0, 12) +
                    " but was given '" + dataset.id() + "' digest " +
                    dataset.digest().digest.substr(0, 12));
  }
  const auto tmpl = registry.load(config.prompt_id, config.prompt_version);

  const ContentHash run_id = config.run_id();
  const auto dir = store.run_dir(run_id);

  if (store.status(run_id) == RunStatus::COMPLETE) {
    return store.load(run_id, dataset);  // idempotent: zero provider calls
  }

  std::filesystem::create_directories(dir);
  DirectoryLock writer_lock(dir / ".lock");  // single writer per run
  if (store.status(run_id) == RunStatus::COMPLETE) {
    return store.load(run_id, dataset);  // finished while we waited on the lock
  }
  const std::string started_at = now_iso8601();
  {
    std::ofstream out(dir / "config.rec", std::ios::binary | std::ios::trunc);
    out << core::canonical_json(config.canonical_form()) << "\n";
  }
  write_status(dir, RunStatus::PARTIAL);

  // What the journal already holds, per example. A torn final line (crash
  // mid-write) is truncated away; anything torn earlier is corruption.
  std::map<std::string, std::map<int, SampleRecord>> journaled;
  {
    std::ifstream in(dir / "samples.recl", std::ios::binary);
    std::string line;
    std::uintmax_t line_start = 0;
    bool pending_truncate = false;
    while (in && std::getline(in, line)) {
      const bool has_newline = !in.eof();
      if (line.empty()) {
        line_start += has_newline ? 1 : 0;
        continue;
      }
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        if (in.peek() == std::char_traits<char>::eof()) {
          pending_truncate = true;
          break;
        }
        throw Error(ErrorCode::RECORD_CORRUPT,
                    "unparsable journal line in run " + run_id.digest.substr(0, 12));
      }
      auto [example_id, sample] = sample_from_json(j);
      if (sample.sample_index < 0 || sample.sample_index >= config.params.n_samples ||
          !dataset.contains(example_id)) {
        throw Error(ErrorCode::RECORD_CORRUPT,
                    "journal row (" + example_id + ", " +
                        std::to_string(sample.sample_index) +
                        ") does not belong to this run");
      }
      journaled[example_id].emplace(sample.sample_index, std::move(sample));
      line_start += line.size() + (has_newline ? 1 : 0);
    }
    in.close();
    if (pending_truncate) {
      std::filesystem::resize_file(dir / "samples.recl", line_start);
    }
  }

  prompts::LabelParseRule rule{dataset.label_set(), config.parse_rule};
  const int n = config.params.n_samples;

  auto fetch_example = [&](const std::string& example_id,
                           std::vector<int> indices) -> std::vector<SampleRecord> {
    const auto& example = dataset.example(example_id);
    auto rendered = prompts::render_for(tmpl, example, config.model.endpoint_type);
    auto responses = providers::complete_indices(upstream, config.model, rendered,
                                                 config.params, replay, indices);
    std::vector<SampleRecord> out;
    out.reserve(responses.size());
    for (auto& response : responses) {
      SampleRecord sample;
      sample.sample_index = response.sample_index;
      sample.raw_text = std::move(response.raw_text);
      sample.parsed = prompts::parse_label(sample.raw_text, rule);
      sample.latency_ms = response.latency_ms;
      sample.usage = response.usage;
      out.push_back(std::move(sample));
    }
    return out;
  };

  RunRecord record;
  record.run_id = run_id;
  record.config = config;
  record.started_at = started_at;

  std::ofstream journal(dir / "samples.recl", std::ios::binary | std::ios::app);
  if (!journal) {
    throw Error(ErrorCode::IO_ERROR, "cannot append to " + (dir / "samples.recl").string());
  }

  // Bounded-parallel fetch, strictly ordered journal writes: a sliding window
  // of futures is drained in canonical example order.
  const auto& order = dataset.canonical_ids();
  struct Pending {
    std::string example_id;
    std::future<std::vector<SampleRecord>> future;
  };
  std::deque<Pending> window;
  const int parallelism = std::max(1, options.parallelism);
  std::size_t next = 0;

  auto drain_one = [&]() {
    Pending pending = std::move(window.front());
    window.pop_front();
    std::vector<SampleRecord> fetched;
    try {
      fetched = pending.future.get();
    } catch (const Error&) {
      throw;
    } catch (const std::exception& ex) {
      throw Error(ErrorCode::PROVIDER_FAILURE, ex.what());
    }
    for (auto& sample : fetched) {
      journal << core::canonical_json(sample_to_json(pending.example_id, sample))
              << "\n";
    }
    journal.flush();
    auto& slot = record.samples[pending.example_id];
    std::move(fetched.begin(), fetched.end(), std::back_inserter(slot));
    std::sort(slot.begin(), slot.end(),
              [](const SampleRecord& a, const SampleRecord& b) {
                return a.sample_index < b.sample_index;
              });
  };

  try {
    while (next < order.size() || !window.empty()) {
      while (next < order.size() && static_cast<int>(window.size()) < parallelism) {
        const std::string& example_id = order[next];
        ++next;
        auto it = journaled.find(example_id);
        std::vector<int> missing;
        for (int i = 0; i < n; ++i) {
          if (it == journaled.end() || it->second.count(i) == 0) {
            missing.push_back(i);
          }
        }
        if (it != journaled.end()) {
          auto& slot = record.samples[example_id];
          for (auto& [idx, sample] : it->second) {
            slot.push_back(std::move(sample));
          }
        }
        if (missing.empty()) {
          continue;
        }
        window.push_back(Pending{example_id,
                                 std::async(std::launch::async, fetch_example,
                                            example_id, std::move(missing))});
      }
      if (!window.empty()) {
        drain_one();
      }
    }
  } catch (const Error& ex) {
    for (auto& pending : window) {  // let in-flight fetches finish quietly
      try {
        pending.future.wait();
      } catch (...) {
      }
    }
    write_status(dir, RunStatus::PARTIAL);
    if (ex.code() == ErrorCode::PROVIDER_FAILURE) {
      throw;
    }
    throw Error(ErrorCode::PROVIDER_FAILURE,
                std::string(ex.what()) + " (run left partial, resumable)");
  }

  journal.close();
  record.finished_at = now_iso8601();
  record.status = RunStatus::COMPLETE;
  {
    json meta = {{"run_id", run_id.to_string()},
                 {"started_at", record.started_at},
                 {"finished_at", record.finished_at},
                 {"tool_version", options.tool_version}};
    std::ofstream out(dir / "meta.rec", std::ios::binary | std::ios::trunc);
    out << meta.dump() << "\n";
  }
  write_status(dir, RunStatus::COMPLETE);
  return record;
}

nlohmann::json MatrixIndex::to_json() const {
  json cells_json = json::array();
  for (const auto& cell : cells) {
    json c = {{"model", cell.model.canonical_form()},
              {"prompt_id", cell.prompt_id},
              {"prompt_version", cell.prompt_version},
              {"status", cell.status}};
    c["run_id"] = cell.run_id ? json(cell.run_id->to_string()) : json(nullptr);
    if (!cell.error.empty()) {
      c["error"] = cell.error;
    }
    cells_json.push_back(std::move(c));
  }
  return json{{"matrix_id", matrix_id.to_string()},
              {"dataset_id", dataset_id},
              {"dataset_digest", dataset_digest.to_string()},
              {"params", params.canonical_form()},
              {"cells", std::move(cells_json)},
              {"generated_at", generated_at},
              {"tool_version", tool_version}};
}

MatrixIndex MatrixIndex::from_json(const nlohmann::json& j) {
  MatrixIndex index;
  index.matrix_id = ContentHash::parse(j.at("matrix_id").get<std::string>());
  index.dataset_id = j.at("dataset_id").get<std::string>();
  index.dataset_digest = ContentHash::parse(j.at("dataset_digest").get<std::string>());
  index.params = SamplingParams::from_json(j.at("params"));
  index.generated_at = j.value("generated_at", "");
  index.tool_version = j.value("tool_version", "");
  for (const auto& c : j.at("cells")) {
    MatrixCell cell;
    cell.model = ModelRef::from_json(c.at("model"));
    cell.prompt_id = c.at("prompt_id").get<std::string>();
    cell.prompt_version = c.at("prompt_version").get<int>();
    if (!c.at("run_id").is_null()) {
      cell.run_id = ContentHash::parse(c.at("run_id").get<std::string>());
    }
    cell.status = c.at("status").get<std::string>();
    cell.error = c.value("error", "");
    index.cells.push_back(std::move(cell));
  }
  return index;
}

MatrixIndex run_matrix(const std::vector<ModelRef>& models,
                       const std::vector<std::pair<std::string, int>>& prompt_versions,
                       const Dataset& dataset, const SamplingParams& params,
                       const prompts::PromptRegistry& registry,
                       const providers::Provider& upstream,
                       const providers::ReplayStore& replay, const RunStore& store,
                       const RunOptions& options) {
  if (models.empty() || prompt_versions.empty()) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "matrix needs >=1 model and >=1 prompt");
  }

  json id_inputs = {{"kind", "matrix-config"},
                    {"dataset_digest", dataset.digest().to_string()},
                    {"params", params.canonical_form()}};
  json model_list = json::array();
  for (const auto& model : models) {
    model_list.push_back(model.canonical_form());
  }
  json prompt_list = json::array();
  for (const auto& [pid, version] : prompt_versions) {
    prompt_list.push_back({{"prompt_id", pid}, {"version", version}});
  }
  id_inputs["models"] = std::move(model_list);
  id_inputs["prompts"] = std::move(prompt_list);

  MatrixIndex index;
  index.matrix_id = core::hash_json(id_inputs);
  index.dataset_id = dataset.id();
  index.dataset_digest = dataset.digest();
  index.params = params;
  index.tool_version = options.tool_version;

  for (const auto& model : models) {
    for (const auto& [prompt_id, version] : prompt_versions) {
      MatrixCell cell;
      cell.model = model;
      cell.prompt_id = prompt_id;
      cell.prompt_version = version;
      RunConfig config;
      config.model = model;
      config.prompt_id = prompt_id;
      config.prompt_version = version;
      config.dataset_id = dataset.id();
      config.dataset_digest = dataset.digest();
      config.params = params;
      try {
        auto record =
            execute_run(config, dataset, registry, upstream, replay, store, options);
        cell.run_id = record.run_id;
        cell.status = "complete";
      } catch (const Error& ex) {
        cell.run_id = config.run_id();
        cell.status = ex.code() == ErrorCode::PROVIDER_FAILURE ? "partial" : "error";
        cell.error = ex.what();
      }
      index.cells.push_back(std::move(cell));
    }
  }

  index.generated_at = now_iso8601();
  auto dir = store.root() / "matrices" / index.matrix_id.digest;
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "index.rec", std::ios::binary | std::ios::trunc);
  out << index.to_json().dump() << "\n";
  return index;
}

MatrixIndex load_matrix(const RunStore& store, const ContentHash& matrix_id) {
  auto path = store.root() / "matrices" / matrix_id.digest / "index.rec";
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::UNKNOWN_RUN, "no matrix index " + matrix_id.digest.substr(0, 12));
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::RECORD_CORRUPT, "unparsable matrix index " + path.string());
  }
  return MatrixIndex::from_json(j);
}

}  // namespace llmregress::runner
