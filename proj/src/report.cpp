#include "llmregress/report.hpp"

#include <cstdio>
#include <sstream>

namespace llmregress::report {

namespace {

using nlohmann::json;

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) {
    return field;
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string opt_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) {
    return "-";
  }
  return format_number(j.at(key).get<double>());
}

void render_slice_rows_table(std::ostringstream& out, const json& rows) {
  out << "slice                     n     acc_base  acc_cand  acc_delta "
         "f1_base   f1_cand   regr improved mean_entropy zero_e_share\n";
  for (const auto& row : rows) {
    char head[64];
    std::snprintf(head, sizeof(head), "%-24s %5d ",
                  row.at("name").get<std::string>().substr(0, 24).c_str(),
                  row.at("n").get<int>());
    out << head << format_number(row.at("accuracy_baseline").get<double>()) << "  "
        << format_number(row.at("accuracy_candidate").get<double>()) << "  "
        << format_number(row.at("accuracy_delta").get<double>()) << "  "
        << format_number(row.at("f1_baseline").get<double>()) << "  "
        << format_number(row.at("f1_candidate").get<double>()) << "  "
        << row.at("flips").at("regressed").get<int>() << "    "
        << row.at("flips").at("improved").get<int>() << "        "
        << opt_number(row, "mean_entropy") << "     "
        << opt_number(row, "zero_entropy_regression_share") << "\n";
  }
}

json flip_counts_json(const analysis::FlipCounts& flips) {
  return json{{"regressed", flips.regressed},
              {"improved", flips.improved},
              {"unflipped_correct", flips.unflipped_correct},
              {"unflipped_wrong", flips.unflipped_wrong}};
}

json slice_row_json(const analysis::SlicePairReport& row) {
  json j = {{"name", row.name},
            {"n", row.n},
            {"accuracy_baseline", row.accuracy_baseline},
            {"accuracy_candidate", row.accuracy_candidate},
            {"accuracy_delta", row.accuracy_delta},
            {"f1_baseline", row.f1_baseline.value},
            {"f1_baseline_degenerate", row.f1_baseline.degenerate},
            {"f1_candidate", row.f1_candidate.value},
            {"f1_candidate_degenerate", row.f1_candidate.degenerate},
            {"f1_delta", row.f1_delta},
            {"flips", flip_counts_json(row.flips)}};
  j["mean_entropy"] = row.mean_entropy ? json(*row.mean_entropy) : json(nullptr);
  j["zero_entropy_regression_share"] =
      row.zero_entropy_regression_share ? json(*row.zero_entropy_regression_share)
                                        : json(nullptr);
  j["share_of_regressions"] =
      row.share_of_regressions ? json(*row.share_of_regressions) : json(nullptr);
  j["slice_base_rate"] =
      row.slice_base_rate ? json(*row.slice_base_rate) : json(nullptr);
  return j;
}

json group_json(const analysis::GroupEntropy& group) {
  json j = {{"count", group.count}, {"empty", group.empty}};
  j["mean"] = group.empty ? json(nullptr) : json(group.mean);
  return j;
}

}  // namespace

nlohmann::json ReportDocument::to_json() const {
  return json{{"kind", kind},
              {"payload", payload},
              {"tool_version", tool_version},
              {"generated_at", generated_at}};
}

ReportDocument ReportDocument::from_json(const nlohmann::json& j) {
  ReportDocument doc;
  doc.kind = j.at("kind").get<std::string>();
  doc.payload = j.at("payload");
  doc.tool_version = j.value("tool_version", "");
  doc.generated_at = j.value("generated_at", "");
  return doc;
}

ReportDocument make_document(const std::string& kind, nlohmann::json payload) {
  ReportDocument doc;
  doc.kind = kind;
  doc.payload = std::move(payload);
  doc.tool_version = runner::kToolVersion;
  doc.generated_at = runner::now_iso8601();
  return doc;
}

nlohmann::json comparison_payload(const analysis::ComparisonSummary& summary) {
  json slices = json::array();
  for (const auto& row : summary.slices) {
    slices.push_back(slice_row_json(row));
  }
  json j = {{"dataset_id", summary.dataset_id},
            {"dataset_digest", summary.dataset_digest.to_string()},
            {"baseline_run", summary.baseline_run.to_string()},
            {"candidate_run", summary.candidate_run.to_string()},
            {"positive_label", summary.positive_label},
            {"overall", slice_row_json(summary.overall)},
            {"slices", std::move(slices)},
            {"entropy_log_base", "e"}};
  if (summary.entropy) {
    j["entropy"] = entropy_payload(*summary.entropy);
  }
  return j;
}

nlohmann::json entropy_payload(const analysis::EntropyBreakdown& breakdown) {
  json j = {{"regressed", group_json(breakdown.regressed)},
            {"improved", group_json(breakdown.improved)},
            {"unflipped_correct", group_json(breakdown.unflipped_correct)},
            {"unflipped_wrong", group_json(breakdown.unflipped_wrong)},
            {"unflipped", group_json(breakdown.unflipped)},
            {"entropy_log_base", "e"}};
  j["zero_entropy_regression_share"] =
      breakdown.zero_entropy_regression_share
          ? json(*breakdown.zero_entropy_regression_share)
          : json(nullptr);
  return j;
}

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

std::string render_table(const ReportDocument& doc) {
  std::ostringstream out;
  const json& p = doc.payload;
  if (doc.kind == "comparison") {
    out << "comparison on dataset " << p.at("dataset_id").get<std::string>() << "\n"
        << "baseline:  " << p.at("baseline_run").get<std::string>() << "\n"
        << "candidate: " << p.at("candidate_run").get<std::string>() << "\n\n";
    json rows = json::array();
    rows.push_back(p.at("overall"));
    for (const auto& row : p.at("slices")) {
      rows.push_back(row);
    }
    render_slice_rows_table(out, rows);
    if (p.contains("entropy")) {
      out << "\nmean entropy by flip group (natural log)\n";
      for (const char* group :
           {"regressed", "improved", "unflipped_correct", "unflipped_wrong", "unflipped"}) {
        const auto& g = p.at("entropy").at(group);
        out << "  " << group << ": ";
        if (g.at("empty").get<bool>()) {
          out << "(empty)";
        } else {
          out << format_number(g.at("mean").get<double>()) << " over "
              << g.at("count").get<int>() << " examples";
        }
        out << "\n";
      }
      out << "  zero-entropy regression share: "
          << opt_number(p.at("entropy"), "zero_entropy_regression_share") << "\n";
    }
  } else if (doc.kind == "suite") {
    out << "suite " << p.at("suite_id").get<std::string>() << "\n";
    for (const auto& v : p.at("verdicts")) {
      char line[256];
      std::snprintf(line, sizeof(line), "%-12s %-28s delta=%s p=%s n=%d%s\n",
                    v.at("status").get<std::string>().c_str(),
                    v.at("test").get<std::string>().substr(0, 28).c_str(),
                    format_number(v.at("observed_delta").get<double>()).c_str(),
                    format_number(v.at("p_value").get<double>()).c_str(),
                    v.at("n_effective").get<int>(),
                    v.at("flaky").get<bool>() ? " [flaky]" : "");
      out << line;
    }
    const auto& s = p.at("summary");
    out << "summary: " << s.at("pass").get<int>() << " pass, "
        << s.at("fail").get<int>() << " fail, " << s.at("inconclusive").get<int>()
        << " inconclusive, " << s.at("flaky").get<int>() << " flaky\n";
  } else if (doc.kind == "matrix") {
    if (p.contains("rows")) {
      out << "accuracy deltas per (update, prompt)\n";
      for (const auto& row : p.at("rows")) {
        out << "  " << row.at("dataset_id").get<std::string>() << " "
            << row.at("model_from").get<std::string>() << " -> "
            << row.at("model_to").get<std::string>() << " ["
            << row.at("prompt_id").get<std::string>() << " v"
            << row.at("prompt_version").get<int>()
            << "]: " << format_number(row.at("accuracy_from").get<double>()) << " -> "
            << format_number(row.at("accuracy_to").get<double>()) << " (delta "
            << format_number(row.at("delta").get<double>()) << ")\n";
      }
    } else {
      out << "matrix " << p.at("matrix_id").get<std::string>() << " on "
          << p.at("dataset_id").get<std::string>() << "\n";
      for (const auto& cell : p.at("cells")) {
        out << "  " << cell.at("model").at("model_name").get<std::string>() << " x "
            << cell.at("prompt_id").get<std::string>() << " v"
            << cell.at("prompt_version").get<int>() << ": "
            << cell.at("status").get<std::string>() << "\n";
      }
    }
  } else if (doc.kind == "entropy") {
    out << "mean entropy by flip group (natural log)\n";
    for (const char* group :
         {"regressed", "improved", "unflipped_correct", "unflipped_wrong", "unflipped"}) {
      const auto& g = p.at(group);
      out << "  " << group << ": ";
      if (g.at("empty").get<bool>()) {
        out << "(empty)";
      } else {
        out << format_number(g.at("mean").get<double>()) << " over "
            << g.at("count").get<int>() << " examples";
      }
      out << "\n";
    }
    out << "  zero-entropy regression share: "
        << opt_number(p, "zero_entropy_regression_share") << "\n";
  } else {
    out << doc.payload.dump(2) << "\n";
  }
  return out.str();
}

std::string render_csv(const ReportDocument& doc) {
  std::ostringstream out;
  const json& p = doc.payload;
  if (doc.kind == "comparison") {
    out << "slice,n,accuracy_baseline,accuracy_candidate,accuracy_delta,"
           "f1_baseline,f1_candidate,f1_delta,regressed,improved,"
           "unflipped_correct,unflipped_wrong,share_of_regressions,"
           "slice_base_rate,mean_entropy,zero_entropy_regression_share\n";
    json rows = json::array();
    rows.push_back(p.at("overall"));
    for (const auto& row : p.at("slices")) {
      rows.push_back(row);
    }
    for (const auto& row : rows) {
      auto opt_field = [&](const char* key) {
        return !row.contains(key) || row.at(key).is_null()
                   ? std::string()
                   : format_number(row.at(key).get<double>());
      };
      out << csv_escape(row.at("name").get<std::string>()) << ','
          << row.at("n").get<int>() << ','
          << format_number(row.at("accuracy_baseline").get<double>()) << ','
          << format_number(row.at("accuracy_candidate").get<double>()) << ','
          << format_number(row.at("accuracy_delta").get<double>()) << ','
          << format_number(row.at("f1_baseline").get<double>()) << ','
          << format_number(row.at("f1_candidate").get<double>()) << ','
          << format_number(row.at("f1_delta").get<double>()) << ','
          << row.at("flips").at("regressed").get<int>() << ','
          << row.at("flips").at("improved").get<int>() << ','
          << row.at("flips").at("unflipped_correct").get<int>() << ','
          << row.at("flips").at("unflipped_wrong").get<int>() << ','
          << opt_field("share_of_regressions") << ','
          << opt_field("slice_base_rate") << ','
          << opt_field("mean_entropy") << ','
          << opt_field("zero_entropy_regression_share") << "\n";
    }
  } else if (doc.kind == "matrix" && p.contains("rows")) {
    out << "dataset_id,model_from,model_to,prompt_id,prompt_version,"
           "accuracy_from,accuracy_to,delta\n";
    for (const auto& row : p.at("rows")) {
      out << csv_escape(row.at("dataset_id").get<std::string>()) << ','
          << csv_escape(row.at("model_from").get<std::string>()) << ','
          << csv_escape(row.at("model_to").get<std::string>()) << ','
          << csv_escape(row.at("prompt_id").get<std::string>()) << ','
          << row.at("prompt_version").get<int>() << ','
          << format_number(row.at("accuracy_from").get<double>()) << ','
          << format_number(row.at("accuracy_to").get<double>()) << ','
          << format_number(row.at("delta").get<double>()) << "\n";
    }
  } else if (doc.kind == "entropy") {
    out << "group,count,mean_entropy,empty\n";
    for (const char* group :
         {"regressed", "improved", "unflipped_correct", "unflipped_wrong", "unflipped"}) {
      const auto& g = p.at(group);
      out << group << ',' << g.at("count").get<int>() << ','
          << (g.at("empty").get<bool>() ? std::string()
                                        : format_number(g.at("mean").get<double>()))
          << ',' << (g.at("empty").get<bool>() ? "true" : "false") << "\n";
    }
  } else if (doc.kind == "suite") {
    out << "test,status,flaky,observed_delta,p_value,n_effective,delta_threshold,"
           "alpha\n";
    for (const auto& v : p.at("verdicts")) {
      out << csv_escape(v.at("test").get<std::string>()) << ','
          << v.at("status").get<std::string>() << ','
          << (v.at("flaky").get<bool>() ? "true" : "false") << ','
          << format_number(v.at("observed_delta").get<double>()) << ','
          << format_number(v.at("p_value").get<double>()) << ','
          << v.at("n_effective").get<int>() << ','
          << format_number(v.at("delta_threshold").get<double>()) << ','
          << format_number(v.at("alpha").get<double>()) << "\n";
    }
  } else {
    throw Error(ErrorCode::INVALID_ARGUMENT,
                "no CSV rendering for report kind '" + doc.kind + "'");
  }
  return out.str();
}

std::vector<MatrixDeltaRow> matrix_delta_rows(const runner::MatrixIndex& index,
                                              const runner::RunStore& store,
                                              const datasets::Dataset& dataset) {
  if (index.dataset_digest != dataset.digest()) {
    throw Error(ErrorCode::DATASET_MISMATCH,
                "matrix was built for a different dataset digest");
  }

  // Rebuild the model and prompt axes in first-appearance order.
  std::vector<providers::ModelRef> models;
  std::vector<std::pair<std::string, int>> prompts;
  for (const auto& cell : index.cells) {
    bool model_seen = std::any_of(models.begin(), models.end(),
                                  [&](const providers::ModelRef& m) {
                                    return m.model_name == cell.model.model_name &&
                                           m.provider == cell.model.provider;
                                  });
    if (!model_seen) {
      models.push_back(cell.model);
    }
    std::pair<std::string, int> prompt{cell.prompt_id, cell.prompt_version};
    if (std::find(prompts.begin(), prompts.end(), prompt) == prompts.end()) {
      prompts.push_back(prompt);
    }
  }

  auto cell_accuracy = [&](const providers::ModelRef& model,
                           const std::pair<std::string, int>& prompt)
      -> std::optional<double> {
    for (const auto& cell : index.cells) {
      if (cell.model.model_name == model.model_name &&
          cell.model.provider == model.provider && cell.prompt_id == prompt.first &&
          cell.prompt_version == prompt.second) {
        if (cell.status != "complete" || !cell.run_id) {
          return std::nullopt;
        }
        auto run = store.load(*cell.run_id, dataset);
        return analysis::accuracy(run, dataset);
      }
    }
    return std::nullopt;
  };

  std::vector<MatrixDeltaRow> rows;
  for (std::size_t from = 0; from < models.size(); ++from) {
    for (std::size_t to = from + 1; to < models.size(); ++to) {
      for (const auto& prompt : prompts) {
        auto acc_from = cell_accuracy(models[from], prompt);
        auto acc_to = cell_accuracy(models[to], prompt);
        if (!acc_from || !acc_to) {
          continue;  // incomplete cells contribute no row
        }
        MatrixDeltaRow row;
        row.dataset_id = index.dataset_id;
        row.model_from = models[from].model_name;
        row.model_to = models[to].model_name;
        row.prompt_id = prompt.first;
        row.prompt_version = prompt.second;
        row.accuracy_from = *acc_from;
        row.accuracy_to = *acc_to;
        row.delta = *acc_to - *acc_from;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

nlohmann::json matrix_delta_payload(const std::vector<MatrixDeltaRow>& rows) {
  json rows_json = json::array();
  for (const auto& row : rows) {
    rows_json.push_back({{"dataset_id", row.dataset_id},
                         {"model_from", row.model_from},
                         {"model_to", row.model_to},
                         {"prompt_id", row.prompt_id},
                         {"prompt_version", row.prompt_version},
                         {"accuracy_from", row.accuracy_from},
                         {"accuracy_to", row.accuracy_to},
                         {"delta", row.delta}});
  }
  return json{{"rows", std::move(rows_json)}};
}

}  // namespace llmregress::report
