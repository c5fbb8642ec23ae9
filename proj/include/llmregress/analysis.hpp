#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "llmregress/datasets.hpp"
#include "llmregress/runner.hpp"

namespace llmregress::analysis {

using core::Label;
using datasets::Dataset;
using datasets::SliceSpec;
using runner::RunRecord;

// Sampled label distribution of one example over n samples. UNPARSED samples
// carry mass outside the per-label probabilities (never renormalized).
struct LabelDistribution {
  std::string example_id;
  std::vector<std::string> label_names;  // label-set order
  std::vector<int> counts;               // aligned with label_names
  int unparsed_count = 0;
  int n = 0;
  std::vector<double> probabilities;     // counts / n
  double unparsed_mass = 0.0;
};

enum class FlipCategory { REGRESSED, IMPROVED, UNFLIPPED_CORRECT, UNFLIPPED_WRONG };

const char* flip_category_name(FlipCategory category);

using FlipMap = std::map<std::string, FlipCategory>;

struct FlipCounts {
  int regressed = 0;
  int improved = 0;
  int unflipped_correct = 0;
  int unflipped_wrong = 0;

  int total() const {
    return regressed + improved + unflipped_correct + unflipped_wrong;
  }
};

struct F1Result {
  double value = 0.0;
  bool degenerate = false;  // 2TP + FP + FN == 0
};

// Majority parsed label with the earliest-sample-index tie-break; nullopt
// when nothing parsed (UNPARSED).
std::optional<Label> point_prediction(const RunRecord& run,
                                      const std::string& example_id);

bool prediction_correct(const RunRecord& run, const datasets::Example& example);

// Fraction of slice examples whose point prediction equals gold; UNPARSED
// counts as wrong. Whole dataset when `slice` is absent.
double accuracy(const RunRecord& run, const Dataset& dataset,
                const std::optional<std::set<std::string>>& slice = std::nullopt);

// Binary F1 on the positive class: 2TP / (2TP + FP + FN). UNPARSED predicts
// no label (an FN when gold is positive, never a TP or FP).
F1Result f1(const RunRecord& run, const Dataset& dataset, const Label& positive,
            const std::optional<std::set<std::string>>& slice = std::nullopt);

// Unweighted mean of per-label binary F1 over the label set.
F1Result f1_macro(const RunRecord& run, const Dataset& dataset,
                  const std::optional<std::set<std::string>>& slice = std::nullopt);

// When `label_set` is given, counts are aligned to its order (zero counts
// included); otherwise labels appear in first-occurrence order. Entropy is
// the same either way.
LabelDistribution estimate_distribution(
    const RunRecord& run, const std::string& example_id,
    const std::optional<core::LabelSet>& label_set = std::nullopt);

// Shannon entropy sum(-p_i ln p_i) over the label set, natural log,
// 0*ln(0) := 0. Unparsed mass is excluded from the sum.
double entropy(const LabelDistribution& dist);

// Per-example flip classification between two complete runs over the same
// dataset digest. The four categories partition the dataset.
FlipMap classify_flips(const RunRecord& baseline, const RunRecord& candidate,
                       const Dataset& dataset);

FlipCounts count_flips(const FlipMap& flips,
                       const std::optional<std::set<std::string>>& slice = std::nullopt);

struct SliceMetrics {
  std::string name;
  int n = 0;
  double accuracy = 0.0;  // candidate-run metrics on the slice
  F1Result f1;
  FlipCounts flips;
  std::optional<double> mean_entropy;
};

struct GroupEntropy {
  int count = 0;
  double mean = 0.0;
  bool empty = true;
};

// Mean entropy per flip group, plus the share of regressions
// whose sampled distribution is fully concentrated (entropy exactly 0).
struct EntropyBreakdown {
  GroupEntropy regressed;
  GroupEntropy improved;
  GroupEntropy unflipped_correct;
  GroupEntropy unflipped_wrong;
  GroupEntropy unflipped;  // union of the two unflipped groups
  std::optional<double> zero_entropy_regression_share;
};

EntropyBreakdown entropy_by_flip(const RunRecord& sampling_run, const FlipMap& flips);

struct SlicePairReport {
  std::string name;
  int n = 0;
  double accuracy_baseline = 0.0;
  double accuracy_candidate = 0.0;
  double accuracy_delta = 0.0;  // candidate - baseline
  F1Result f1_baseline;
  F1Result f1_candidate;
  double f1_delta = 0.0;
  FlipCounts flips;
  std::optional<double> mean_entropy;  // candidate sampling run, when given
  std::optional<double> zero_entropy_regression_share;
  // Slice disproportionality, present when the pair has any regression at all:
  // |REGRESSED ∩ slice| / |REGRESSED| vs the slice's share of the reference
  // population (gold-positive examples).
  std::optional<double> share_of_regressions;
  std::optional<double> slice_base_rate;
};

struct ComparisonSummary {
  std::string dataset_id;
  core::ContentHash dataset_digest;
  core::ContentHash baseline_run;
  core::ContentHash candidate_run;
  std::string positive_label;
  SlicePairReport overall;
  std::vector<SlicePairReport> slices;
  std::optional<EntropyBreakdown> entropy;  // when a sampling run is supplied
};

// Overall and per-slice deltas, flip counts, and (when `sampling_run` has
// n >= 2) the entropy breakdown and zero-entropy regression share.
ComparisonSummary delta_report(const RunRecord& baseline, const RunRecord& candidate,
                               const Dataset& dataset,
                               const std::vector<SliceSpec>& slices,
                               const Label& positive,
                               const RunRecord* sampling_run = nullptr);

// (|REGRESSED ∩ slice| / |REGRESSED|, |slice ∩ reference| / |reference|).
// The reference population defaults to the gold-positive examples; pass
// explicit ids to override.
std::pair<double, double> slice_regression_share(
    const FlipMap& flips, const Dataset& dataset, const SliceSpec& spec,
    const Label& positive,
    const std::optional<std::set<std::string>>& reference_ids = std::nullopt);

}  // namespace llmregress::analysis
