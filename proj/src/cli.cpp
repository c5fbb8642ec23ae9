#include "llmregress/cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "llmregress/analysis.hpp"
#include "llmregress/datasets.hpp"
#include "llmregress/driftsim.hpp"
#include "llmregress/prompts.hpp"
#include "llmregress/providers.hpp"
#include "llmregress/regress.hpp"
#include "llmregress/report.hpp"
#include "llmregress/runner.hpp"

namespace llmregress::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const Error& ex) {
  switch (ex.code()) {
    case ErrorCode::HTTP_ERROR:
    case ErrorCode::RATE_LIMITED:
    case ErrorCode::REPLAY_MISS:
      return 5;
    default:
      return 4;
  }
}

core::ContentHash parse_run_id(const std::string& text) {
  if (text.find(':') != std::string::npos) {
    return core::ContentHash::parse(text);
  }
  return core::ContentHash{"sha256", text};
}

json load_json_file(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IO_ERROR,
                std::string("cannot open ") + what + " file " + path.string());
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::MALFORMED_RECORD,
                std::string(what) + " file " + path.string() + " is not valid JSON");
  }
  return j;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::IO_ERROR, "cannot write output file " + out_path);
  }
  out << text;
}

void emit_document(const report::ReportDocument& doc, const std::string& format,
                   const std::string& out_path) {
  if (format == "json") {
    emit(doc.to_json().dump(2) + "\n", out_path);
  } else if (format == "table") {
    emit(report::render_table(doc), out_path);
  } else if (format == "csv") {
    emit(report::render_csv(doc), out_path);
  } else {
    throw Error(ErrorCode::INVALID_ARGUMENT, "unknown format '" + format + "'");
  }
}

struct StorePaths {
  std::string store = "store";
  std::string registry;  // defaults to <store>/prompts
  std::string replay;    // defaults to <store>/replay

  fs::path registry_path() const {
    return registry.empty() ? fs::path(store) / "prompts" : fs::path(registry);
  }
  fs::path replay_path() const {
    return replay.empty() ? fs::path(store) / "replay" : fs::path(replay);
  }

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--store", store, "store root (runs/, matrices/, prompts/, replay/)");
    cmd->add_option("--registry", registry, "prompt registry root (default <store>/prompts)");
    cmd->add_option("--replay", replay, "replay store root (default <store>/replay)");
  }
};

// Provider construction from the config file's "provider" object. Synthetic
// specs fold their digest into seed_note so distinct simulators hash to
// distinct runs.
std::unique_ptr<providers::Provider> make_provider(const json& config,
                                                   const fs::path& config_dir,
                                                   const datasets::Dataset& dataset,
                                                   std::string* seed_note) {
  if (!config.contains("provider")) {
    return std::make_unique<providers::HttpProvider>(providers::HttpProviderOptions{});
  }
  const json& p = config.at("provider");
  const std::string kind = p.value("kind", "http");
  if (kind == "http") {
    providers::HttpProviderOptions options;
    options.base_url = p.value("base_url", "");
    options.max_attempts = p.value("max_attempts", 5);
    options.max_inflight = p.value("max_inflight", 8);
    // Credentials come from the environment; the config only names the
    // variable. Keys never enter stored artifacts.
    if (p.contains("api_key_env")) {
      if (const char* key = std::getenv(p.at("api_key_env").get<std::string>().c_str())) {
        options.api_key = key;
      }
    }
    if (p.contains("base_url_env") && options.base_url.empty()) {
      if (const char* url = std::getenv(p.at("base_url_env").get<std::string>().c_str())) {
        options.base_url = url;
      }
    }
    return std::make_unique<providers::HttpProvider>(std::move(options));
  }
  if (kind == "synthetic") {
    json spec_json;
    if (p.contains("spec")) {
      spec_json = p.at("spec");
    } else if (p.contains("spec_path")) {
      fs::path spec_path = p.at("spec_path").get<std::string>();
      if (spec_path.is_relative()) {
        spec_path = config_dir / spec_path;
      }
      spec_json = load_json_file(spec_path, "synthetic spec");
    } else {
      throw Error(ErrorCode::INVALID_ARGUMENT,
                  "synthetic provider needs 'spec' or 'spec_path'");
    }
    auto spec = driftsim::SyntheticModelSpec::from_json(spec_json);
    if (seed_note) {
      const std::string digest = core::hash_json(spec.to_json()).digest.substr(0, 16);
      *seed_note += (seed_note->empty() ? "" : " ") + ("synthetic:" + digest);
    }
    return std::make_unique<driftsim::SyntheticProvider>(std::move(spec), dataset);
  }
  throw Error(ErrorCode::INVALID_ARGUMENT, "unknown provider kind '" + kind + "'");
}

int cmd_dataset_validate(const std::string& dataset_path) {
  auto dataset = datasets::load_dataset(dataset_path);
  std::cout << "dataset " << dataset.id() << ": " << dataset.size() << " examples\n";
  for (const auto& label : dataset.label_set().labels()) {
    std::cout << "  " << label.name() << ": " << dataset.count_gold(label) << "\n";
  }
  std::cout << "digest " << dataset.digest().to_string() << "\n";
  return 0;
}

int cmd_prompt_add(const StorePaths& paths, const std::string& prompt_id,
                   const std::string& mode, const std::string& body_file,
                   const std::string& system_file, int parent,
                   const std::string& notes, const std::string& created_at) {
  auto read_file = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw Error(ErrorCode::IO_ERROR, "cannot open " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };

  prompts::PromptTemplate tmpl;
  tmpl.prompt_id = prompt_id;
  tmpl.mode = prompts::prompt_mode_from_name(mode);
  tmpl.body = read_file(body_file);
  if (!system_file.empty()) {
    tmpl.system_preamble = read_file(system_file);
  }
  if (parent > 0) {
    tmpl.parent_version = parent;
  }
  tmpl.notes = notes;
  tmpl.created_at = created_at.empty() ? runner::now_iso8601() : created_at;

  prompts::PromptRegistry registry(paths.registry_path());
  int version = registry.register_prompt(tmpl);
  auto stored = registry.load(prompt_id, version);
  std::cout << "registered " << prompt_id << " v" << version << " "
            << stored.content_hash().to_string() << "\n";
  return 0;
}

int cmd_prompt_list(const StorePaths& paths, const std::string& prompt_id) {
  prompts::PromptRegistry registry(paths.registry_path());
  auto ids = prompt_id.empty() ? registry.prompt_ids()
                               : std::vector<std::string>{prompt_id};
  for (const auto& id : ids) {
    for (int version : registry.versions(id)) {
      auto tmpl = registry.load(id, version);
      std::cout << id << " v" << version << " mode=" << prompt_mode_name(tmpl.mode)
                << " parent="
                << (tmpl.parent_version ? std::to_string(*tmpl.parent_version) : "-")
                << " created=" << tmpl.created_at << " "
                << tmpl.content_hash().to_string() << "\n";
    }
  }
  return 0;
}

int cmd_prompt_diff(const StorePaths& paths, const std::string& prompt_id, int from,
                    int to) {
  prompts::PromptRegistry registry(paths.registry_path());
  auto a = registry.load(prompt_id, from);
  auto b = registry.load(prompt_id, to);

  auto split_lines = [](const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      lines.push_back(line);
    }
    return lines;
  };
  auto lhs = split_lines(a.body);
  auto rhs = split_lines(b.body);

  // Small LCS; prompt bodies are tiny.
  std::vector<std::vector<int>> lcs(lhs.size() + 1, std::vector<int>(rhs.size() + 1, 0));
  for (std::size_t i = lhs.size(); i-- > 0;) {
    for (std::size_t j = rhs.size(); j-- > 0;) {
      lcs[i][j] = lhs[i] == rhs[j] ? lcs[i + 1][j + 1] + 1
                                   : std::max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  }
  std::cout << "--- " << prompt_id << " v" << from << "\n+++ " << prompt_id << " v"
            << to << "\n";
  std::size_t i = 0, j = 0;
  while (i < lhs.size() || j < rhs.size()) {
    if (i < lhs.size() && j < rhs.size() && lhs[i] == rhs[j]) {
      std::cout << "  " << lhs[i] << "\n";
      ++i;
      ++j;
    } else if (j < rhs.size() && (i == lhs.size() || lcs[i][j + 1] >= lcs[i + 1][j])) {
      std::cout << "+ " << rhs[j] << "\n";
      ++j;
    } else {
      std::cout << "- " << lhs[i] << "\n";
      ++i;
    }
  }
  return 0;
}

int cmd_run(const StorePaths& paths, const std::string& config_path,
            const std::string& dataset_path, const std::string& replay_mode,
            int parallelism) {
  auto dataset = datasets::load_dataset(dataset_path);
  json config_json = load_json_file(config_path, "run config");

  runner::RunConfig config;
  config.model = providers::ModelRef::from_json(config_json.at("model"));
  config.prompt_id = config_json.at("prompt_id").get<std::string>();
  config.prompt_version = config_json.at("prompt_version").get<int>();
  config.dataset_id = dataset.id();
  config.dataset_digest = dataset.digest();
  config.params = providers::SamplingParams::from_json(config_json.at("params"));
  config.parse_rule = config_json.value("parse_rule", runner::kDefaultParseRule);
  config.seed_note = config_json.value("seed_note", "");

  auto provider = make_provider(config_json, fs::path(config_path).parent_path(),
                                dataset, &config.seed_note);
  providers::ReplayStore replay(paths.replay_path(),
                                providers::replay_mode_from_name(replay_mode));
  runner::RunStore store(paths.store);
  prompts::PromptRegistry registry(paths.registry_path());

  runner::RunOptions options;
  options.parallelism = parallelism;
  try {
    auto record =
        runner::execute_run(config, dataset, registry, *provider, replay, store, options);
    std::cout << record.run_id.to_string() << "\n";
    return 0;
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::PROVIDER_FAILURE) {
      std::cerr << "error: " << ex.what() << "\n";
      std::cout << config.run_id().to_string() << "\n";
      return 3;  // run left partial, resumable
    }
    throw;
  }
}

int cmd_matrix(const StorePaths& paths, const std::string& config_path,
               const std::string& dataset_path, const std::string& replay_mode,
               int parallelism, const std::string& format, const std::string& out) {
  auto dataset = datasets::load_dataset(dataset_path);
  json config_json = load_json_file(config_path, "matrix config");

  std::vector<providers::ModelRef> models;
  for (const auto& mj : config_json.at("models")) {
    models.push_back(providers::ModelRef::from_json(mj));
  }
  std::vector<std::pair<std::string, int>> prompt_versions;
  for (const auto& pj : config_json.at("prompts")) {
    prompt_versions.emplace_back(pj.at("prompt_id").get<std::string>(),
                                 pj.at("version").get<int>());
  }
  auto params = providers::SamplingParams::from_json(config_json.at("params"));

  auto provider = make_provider(config_json, fs::path(config_path).parent_path(),
                                dataset, nullptr);
  providers::ReplayStore replay(paths.replay_path(),
                                providers::replay_mode_from_name(replay_mode));
  runner::RunStore store(paths.store);
  prompts::PromptRegistry registry(paths.registry_path());

  runner::RunOptions options;
  options.parallelism = parallelism;
  auto index = runner::run_matrix(models, prompt_versions, dataset, params, registry,
                                  *provider, replay, store, options);

  auto doc = report::make_document("matrix", index.to_json());
  emit_document(doc, format, out);
  bool any_failed = std::any_of(index.cells.begin(), index.cells.end(),
                                [](const runner::MatrixCell& c) {
                                  return c.status != "complete";
                                });
  return any_failed ? 3 : 0;
}

std::vector<datasets::SliceSpec> load_slices_file(const std::string& path) {
  std::vector<datasets::SliceSpec> slices;
  if (path.empty()) {
    return slices;
  }
  json j = load_json_file(path, "slices");
  const json& arr = j.is_array() ? j : j.at("slices");
  for (const auto& spec : arr) {
    slices.push_back(datasets::SliceSpec::from_json(spec));
  }
  return slices;
}

int cmd_compare_runs(const StorePaths& paths, const std::string& baseline_id,
                     const std::string& candidate_id, const std::string& dataset_path,
                     const std::string& slices_path, const std::string& sampling_id,
                     const std::string& positive_name, const std::string& format,
                     const std::string& csv_table, const std::string& out) {
  auto dataset = datasets::load_dataset(dataset_path);
  runner::RunStore store(paths.store);

  auto baseline = store.load(parse_run_id(baseline_id), dataset);
  auto candidate = store.load(parse_run_id(candidate_id), dataset);
  if (baseline.status != runner::RunStatus::COMPLETE ||
      candidate.status != runner::RunStatus::COMPLETE) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "both runs must be complete");
  }

  std::optional<runner::RunRecord> sampling;
  if (!sampling_id.empty()) {
    sampling = store.load(parse_run_id(sampling_id), dataset);
  }

  const core::Label positive(positive_name.empty()
                                 ? dataset.label_set().at(0).name()
                                 : positive_name);
  auto slices = load_slices_file(slices_path);
  auto summary = analysis::delta_report(baseline, candidate, dataset, slices, positive,
                                        sampling ? &*sampling : nullptr);

  if (format == "csv" && csv_table == "entropy") {
    if (!summary.entropy) {
      throw Error(ErrorCode::INVALID_ARGUMENT,
                  "entropy table needs --sampling-run");
    }
    auto doc = report::make_document("entropy", report::entropy_payload(*summary.entropy));
    emit_document(doc, format, out);
    return 0;
  }
  auto doc = report::make_document("comparison", report::comparison_payload(summary));
  emit_document(doc, format, out);
  return 0;
}

int cmd_compare_matrices(const StorePaths& paths,
                         const std::vector<std::string>& matrix_ids,
                         const std::vector<std::string>& dataset_paths,
                         const std::string& format, const std::string& out) {
  runner::RunStore store(paths.store);
  std::vector<datasets::Dataset> loaded;
  for (const auto& path : dataset_paths) {
    loaded.push_back(datasets::load_dataset(path));
  }

  std::vector<report::MatrixDeltaRow> rows;
  for (const auto& id_text : matrix_ids) {
    auto index = runner::load_matrix(store, parse_run_id(id_text));
    const datasets::Dataset* dataset = nullptr;
    for (const auto& d : loaded) {
      if (d.digest() == index.dataset_digest) {
        dataset = &d;
        break;
      }
    }
    if (!dataset) {
      throw Error(ErrorCode::DATASET_MISMATCH,
                  "no --dataset matches matrix " + index.matrix_id.digest.substr(0, 12));
    }
    auto matrix_rows = report::matrix_delta_rows(index, store, *dataset);
    rows.insert(rows.end(), matrix_rows.begin(), matrix_rows.end());
  }

  auto doc = report::make_document("matrix", report::matrix_delta_payload(rows));
  emit_document(doc, format, out);
  return 0;
}

core::ContentHash resolve_baseline(const regress::TestSuite& suite,
                                   const runner::RunStore& store,
                                   const datasets::Dataset& dataset) {
  if (suite.baseline.run_id) {
    return *suite.baseline.run_id;
  }
  if (!suite.baseline.model) {
    throw Error(ErrorCode::INVALID_ARGUMENT,
                "suite has no baseline selector; pass --baseline");
  }
  for (const auto& run_id : store.list_runs()) {
    runner::RunConfig config;
    try {
      config = store.load_config(run_id);
    } catch (const Error&) {
      continue;
    }
    if (config.dataset_digest == dataset.digest() &&
        config.model.model_name == suite.baseline.model->model_name &&
        config.model.provider == suite.baseline.model->provider &&
        config.prompt_id == suite.baseline.prompt_id &&
        config.prompt_version == suite.baseline.prompt_version &&
        store.status(run_id) == runner::RunStatus::COMPLETE) {
      return run_id;
    }
  }
  throw Error(ErrorCode::UNKNOWN_RUN, "no complete run matches the suite baseline selector");
}

int cmd_suite(const StorePaths& paths, const std::string& suite_path,
              const std::string& baseline_id, const std::string& candidate_id,
              const std::string& dataset_path, const std::string& sampling_id,
              const std::string& format, const std::string& out) {
  auto dataset = datasets::load_dataset(dataset_path);
  auto suite = regress::load_suite(suite_path);
  if (suite.dataset_id != dataset.id()) {
    throw Error(ErrorCode::DATASET_MISMATCH,
                "suite targets dataset '" + suite.dataset_id + "', got '" +
                    dataset.id() + "'");
  }
  runner::RunStore store(paths.store);

  const core::ContentHash baseline_run =
      baseline_id.empty() ? resolve_baseline(suite, store, dataset)
                          : parse_run_id(baseline_id);
  if (candidate_id.empty()) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "suite needs --candidate");
  }
  auto baseline = store.load(baseline_run, dataset);
  auto candidate = store.load(parse_run_id(candidate_id), dataset);

  std::optional<runner::RunRecord> sampling;
  if (!sampling_id.empty()) {
    sampling = store.load(parse_run_id(sampling_id), dataset);
  }

  auto report_out = regress::run_suite(suite, baseline, candidate, dataset,
                                       sampling ? &*sampling : nullptr);
  auto doc = report::make_document("suite", regress::suite_report_to_json(report_out));
  emit_document(doc, format, out);
  return report_out.exit_code();
}

int cmd_simulate(const std::string& which, const std::string& drift_path,
                 const std::string& test_path, const std::string& dataset_path,
                 int trials, std::uint64_t seed, const std::string& out) {
  auto dataset = datasets::load_dataset(dataset_path);
  auto drift = driftsim::load_drift_spec(drift_path);
  json test_json = load_json_file(test_path, "test config");
  auto test = regress::regression_test_from_json(test_json, nullptr);

  driftsim::ExperimentResult result;
  if (which == "calibrate") {
    result = driftsim::calibration_experiment(drift, test, dataset, trials, seed);
  } else {
    result = driftsim::power_experiment(drift, test, dataset, trials, seed);
  }

  std::cout << which << ": " << result.fails << "/" << result.trials
            << " FAIL verdicts, rate " << report::format_number(result.fail_rate)
            << " (95% ci " << report::format_number(result.ci_low) << " .. "
            << report::format_number(result.ci_high) << ")\n";
  if (!out.empty()) {
    emit(driftsim::experiment_csv(result), out);
  }
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"regression testing for prompts on evolving LLM endpoints",
               "llmregress"};
  app.require_subcommand(1);

  // dataset validate
  auto* dataset_cmd = app.add_subcommand("dataset", "dataset utilities");
  dataset_cmd->require_subcommand(1);
  auto* validate_cmd = dataset_cmd->add_subcommand("validate", "load and check a dataset");
  std::string validate_dataset;
  validate_cmd->add_option("--dataset", validate_dataset, "dataset file")->required();

  // prompt add|list|diff
  auto* prompt_cmd = app.add_subcommand("prompt", "prompt registry");
  prompt_cmd->require_subcommand(1);
  StorePaths prompt_paths;
  std::string p_id, p_mode = "completion", p_body, p_system, p_notes, p_created;
  int p_parent = 0, p_from = 0, p_to = 0;
  auto* add_cmd = prompt_cmd->add_subcommand("add", "register the next prompt version");
  prompt_paths.add_flags(add_cmd);
  add_cmd->add_option("--prompt-id", p_id)->required();
  add_cmd->add_option("--mode", p_mode, "completion|chat");
  add_cmd->add_option("--body-file", p_body, "template body file")->required();
  add_cmd->add_option("--system-file", p_system, "system preamble file (chat)");
  add_cmd->add_option("--parent", p_parent, "parent version");
  add_cmd->add_option("--notes", p_notes);
  add_cmd->add_option("--created-at", p_created, "override timestamp (ISO-8601)");
  auto* list_cmd = prompt_cmd->add_subcommand("list", "list registered prompts");
  list_cmd->add_option("--store", prompt_paths.store);
  list_cmd->add_option("--registry", prompt_paths.registry);
  list_cmd->add_option("--prompt-id", p_id);
  auto* diff_cmd = prompt_cmd->add_subcommand("diff", "diff two versions");
  diff_cmd->add_option("--store", prompt_paths.store);
  diff_cmd->add_option("--registry", prompt_paths.registry);
  diff_cmd->add_option("--prompt-id", p_id)->required();
  diff_cmd->add_option("--from", p_from)->required();
  diff_cmd->add_option("--to", p_to)->required();

  // run
  auto* run_cmd = app.add_subcommand("run", "execute or resume one run");
  StorePaths run_paths;
  run_paths.add_flags(run_cmd);
  std::string run_config, run_dataset, run_replay_mode = "record";
  int run_parallelism = 8;
  run_cmd->add_option("--config", run_config, "run config file")->required();
  run_cmd->add_option("--dataset", run_dataset, "dataset file")->required();
  run_cmd->add_option("--replay-mode", run_replay_mode, "record|replay|passthrough");
  run_cmd->add_option("--parallelism", run_parallelism);

  // matrix
  auto* matrix_cmd = app.add_subcommand("matrix", "run a (models x prompts) grid");
  StorePaths matrix_paths;
  matrix_paths.add_flags(matrix_cmd);
  std::string matrix_config, matrix_dataset, matrix_replay_mode = "record";
  std::string matrix_format = "json", matrix_out;
  int matrix_parallelism = 8;
  matrix_cmd->add_option("--config", matrix_config)->required();
  matrix_cmd->add_option("--dataset", matrix_dataset)->required();
  matrix_cmd->add_option("--replay-mode", matrix_replay_mode);
  matrix_cmd->add_option("--parallelism", matrix_parallelism);
  matrix_cmd->add_option("--format", matrix_format, "json|table|csv");
  matrix_cmd->add_option("--out", matrix_out);

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "compare runs or matrices");
  StorePaths compare_paths;
  compare_paths.add_flags(compare_cmd);
  std::string cmp_baseline, cmp_candidate, cmp_slices, cmp_sampling, cmp_positive;
  std::string cmp_format = "json", cmp_out, cmp_csv_table = "slices";
  std::vector<std::string> cmp_matrices, cmp_datasets;
  compare_cmd->add_option("--baseline", cmp_baseline, "baseline run id");
  compare_cmd->add_option("--candidate", cmp_candidate, "candidate run id");
  compare_cmd->add_option("--dataset", cmp_datasets, "dataset file (repeatable)");
  compare_cmd->add_option("--slices", cmp_slices, "slices file");
  compare_cmd->add_option("--sampling-run", cmp_sampling,
                          "candidate sampling run id (entropy)");
  compare_cmd->add_option("--positive", cmp_positive, "positive label (default: first)");
  compare_cmd->add_option("--matrix", cmp_matrices, "matrix id (repeatable)");
  compare_cmd->add_option("--format", cmp_format, "json|table|csv");
  compare_cmd->add_option("--csv-table", cmp_csv_table, "slices|entropy");
  compare_cmd->add_option("--out", cmp_out);

  // suite
  auto* suite_cmd = app.add_subcommand("suite", "evaluate a regression test suite");
  StorePaths suite_paths;
  suite_paths.add_flags(suite_cmd);
  std::string suite_path, suite_baseline, suite_candidate, suite_dataset;
  std::string suite_sampling, suite_format = "json", suite_out;
  suite_cmd->add_option("--suite", suite_path)->required();
  suite_cmd->add_option("--baseline", suite_baseline,
                        "baseline run id (default: suite selector)");
  suite_cmd->add_option("--candidate", suite_candidate)->required();
  suite_cmd->add_option("--dataset", suite_dataset)->required();
  suite_cmd->add_option("--sampling-run", suite_sampling);
  suite_cmd->add_option("--format", suite_format, "json|table|csv");
  suite_cmd->add_option("--out", suite_out);

  // simulate calibrate|power
  auto* simulate_cmd = app.add_subcommand("simulate", "synthetic drift experiments");
  simulate_cmd->require_subcommand(1);
  std::string sim_drift, sim_test, sim_dataset, sim_out;
  int sim_trials = 500;
  std::uint64_t sim_seed = 1;
  for (const char* name : {"calibrate", "power"}) {
    auto* sub = simulate_cmd->add_subcommand(
        name, std::string(name) == "calibrate" ? "null-hypothesis FAIL rate"
                                               : "detection rate under drift");
    sub->add_option("--drift", sim_drift, "drift spec file")->required();
    sub->add_option("--test", sim_test, "regression test file")->required();
    sub->add_option("--dataset", sim_dataset, "dataset file")->required();
    sub->add_option("--trials", sim_trials);
    sub->add_option("--seed", sim_seed);
    sub->add_option("--out", sim_out, "per-trial CSV output");
  }

  std::vector<std::string> argv(args);
  try {
    std::vector<const char*> raw;
    raw.push_back("llmregress");
    for (const auto& a : argv) {
      raw.push_back(a.c_str());
    }
    app.parse(static_cast<int>(raw.size()), raw.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 4;
  }

  try {
    if (validate_cmd->parsed()) {
      return cmd_dataset_validate(validate_dataset);
    }
    if (add_cmd->parsed()) {
      return cmd_prompt_add(prompt_paths, p_id, p_mode, p_body, p_system, p_parent,
                            p_notes, p_created);
    }
    if (list_cmd->parsed()) {
      return cmd_prompt_list(prompt_paths, p_id);
    }
    if (diff_cmd->parsed()) {
      return cmd_prompt_diff(prompt_paths, p_id, p_from, p_to);
    }
    if (run_cmd->parsed()) {
      return cmd_run(run_paths, run_config, run_dataset, run_replay_mode,
                     run_parallelism);
    }
    if (matrix_cmd->parsed()) {
      return cmd_matrix(matrix_paths, matrix_config, matrix_dataset,
                        matrix_replay_mode, matrix_parallelism, matrix_format,
                        matrix_out);
    }
    if (compare_cmd->parsed()) {
      if (!cmp_matrices.empty()) {
        return cmd_compare_matrices(compare_paths, cmp_matrices, cmp_datasets,
                                    cmp_format, cmp_out);
      }
      if (cmp_baseline.empty() || cmp_candidate.empty() || cmp_datasets.empty()) {
        throw Error(ErrorCode::INVALID_ARGUMENT,
                    "compare needs --baseline, --candidate and --dataset "
                    "(or --matrix)");
      }
      return cmd_compare_runs(compare_paths, cmp_baseline, cmp_candidate,
                              cmp_datasets.front(), cmp_slices, cmp_sampling,
                              cmp_positive, cmp_format, cmp_csv_table, cmp_out);
    }
    if (suite_cmd->parsed()) {
      return cmd_suite(suite_paths, suite_path, suite_baseline, suite_candidate,
                       suite_dataset, suite_sampling, suite_format, suite_out);
    }
    if (simulate_cmd->parsed()) {
      const std::string which =
          simulate_cmd->get_subcommands().front()->get_name();
      return cmd_simulate(which, sim_drift, sim_test, sim_dataset, sim_trials,
                          sim_seed, sim_out);
    }
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return exit_code_for(ex);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 4;
  }
  return 4;
}

}  // namespace llmregress::cli
