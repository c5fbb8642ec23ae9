#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmregress/analysis.hpp"
#include "llmregress/regress.hpp"
#include "llmregress/runner.hpp"

namespace llmregress::report {

// Envelope for every emitted report. The payload is the single source of
// truth: all renderings (JSON, table, CSV) are derived from it alone, so the
// numbers agree across formats.
struct ReportDocument {
  std::string kind;  // matrix | comparison | suite | entropy
  nlohmann::json payload;
  std::string tool_version;
  std::string generated_at;

  nlohmann::json to_json() const;
  static ReportDocument from_json(const nlohmann::json& j);
};

ReportDocument make_document(const std::string& kind, nlohmann::json payload);

nlohmann::json comparison_payload(const analysis::ComparisonSummary& summary);
nlohmann::json entropy_payload(const analysis::EntropyBreakdown& breakdown);

// Fixed six-decimal rendering used by every human-readable table.
std::string format_number(double value);

std::string render_table(const ReportDocument& doc);
std::string render_csv(const ReportDocument& doc);

// Per-cell accuracy deltas across updates: for each matrix, every ordered model
// pair (earlier row -> later row) crossed with every prompt column.
struct MatrixDeltaRow {
  std::string dataset_id;
  std::string model_from;
  std::string model_to;
  std::string prompt_id;
  int prompt_version = 0;
  double accuracy_from = 0.0;
  double accuracy_to = 0.0;
  double delta = 0.0;
};

std::vector<MatrixDeltaRow> matrix_delta_rows(const runner::MatrixIndex& index,
                                              const runner::RunStore& store,
                                              const datasets::Dataset& dataset);

nlohmann::json matrix_delta_payload(const std::vector<MatrixDeltaRow>& rows);

}  // namespace llmregress::report
