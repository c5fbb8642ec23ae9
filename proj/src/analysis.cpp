#include "llmregress/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace llmregress::analysis {

namespace {

void require_complete(const RunRecord& run, const char* who) {
  if (run.status != runner::RunStatus::COMPLETE) {
    throw Error(ErrorCode::INVALID_ARGUMENT,
                std::string(who) + " run " + run.run_id.digest.substr(0, 12) +
                    " is not complete");
  }
}

std::set<std::string> resolve_slice(const Dataset& dataset,
                                    const std::optional<std::set<std::string>>& slice) {
  if (!slice) {
    std::set<std::string> all(dataset.canonical_ids().begin(),
                              dataset.canonical_ids().end());
    return all;
  }
  if (slice->empty()) {
    throw Error(ErrorCode::EMPTY_SLICE, "slice is empty");
  }
  for (const auto& id : *slice) {
    if (!dataset.contains(id)) {
      throw Error(ErrorCode::UNKNOWN_EXAMPLE,
                  "slice id '" + id + "' is not in dataset '" + dataset.id() + "'");
    }
  }
  return *slice;
}

struct Confusion {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
};

Confusion confusion_for(const RunRecord& run, const Dataset& dataset,
                        const Label& positive, const std::set<std::string>& ids) {
  Confusion c;
  for (const auto& id : ids) {
    const auto& example = dataset.example(id);
    auto predicted = point_prediction(run, id);
    const bool gold_pos = example.gold == positive;
    const bool pred_pos = predicted && *predicted == positive;
    if (pred_pos && gold_pos) {
      ++c.tp;
    } else if (pred_pos && !gold_pos) {
      ++c.fp;
    } else if (!pred_pos && gold_pos) {
      ++c.fn;  // includes UNPARSED with positive gold
    }
  }
  return c;
}

F1Result f1_from_confusion(const Confusion& c) {
  const long long denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) {
    return F1Result{0.0, true};
  }
  return F1Result{2.0 * static_cast<double>(c.tp) / static_cast<double>(denom), false};
}

GroupEntropy finalize_group(const std::vector<double>& values) {
  GroupEntropy g;
  g.count = static_cast<int>(values.size());
  g.empty = values.empty();
  if (!g.empty) {
    double sum = 0.0;
    for (double v : values) sum += v;
    g.mean = sum / static_cast<double>(values.size());
  }
  return g;
}

}  // namespace

const char* flip_category_name(FlipCategory category) {
  switch (category) {
    case FlipCategory::REGRESSED: return "regressed";
    case FlipCategory::IMPROVED: return "improved";
    case FlipCategory::UNFLIPPED_CORRECT: return "unflipped_correct";
    case FlipCategory::UNFLIPPED_WRONG: return "unflipped_wrong";
  }
  return "unknown";
}

std::optional<Label> point_prediction(const RunRecord& run,
                                      const std::string& example_id) {
  require_complete(run, "prediction");
  const auto& samples = run.samples_for(example_id);
  if (samples.size() == 1) {
    return samples.front().parsed;
  }
  // Majority over parsed labels; ties go to the label seen at the earliest
  // sample_index among the tied ones.
  std::map<Label, int> counts;
  std::map<Label, int> first_seen;
  for (const auto& sample : samples) {
    if (!sample.parsed) {
      continue;
    }
    ++counts[*sample.parsed];
    if (first_seen.count(*sample.parsed) == 0) {
      first_seen[*sample.parsed] = sample.sample_index;
    }
  }
  if (counts.empty()) {
    return std::nullopt;
  }
  int best = 0;
  for (const auto& [label, count] : counts) {
    best = std::max(best, count);
  }
  std::optional<Label> winner;
  int winner_seen = 0;
  for (const auto& [label, count] : counts) {
    if (count != best) {
      continue;
    }
    if (!winner || first_seen[label] < winner_seen) {
      winner = label;
      winner_seen = first_seen[label];
    }
  }
  return winner;
}

bool prediction_correct(const RunRecord& run, const datasets::Example& example) {
  auto predicted = point_prediction(run, example.id);
  return predicted && *predicted == example.gold;
}

double accuracy(const RunRecord& run, const Dataset& dataset,
                const std::optional<std::set<std::string>>& slice) {
  require_complete(run, "accuracy");
  auto ids = resolve_slice(dataset, slice);
  long long correct = 0;
  for (const auto& id : ids) {
    if (prediction_correct(run, dataset.example(id))) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

F1Result f1(const RunRecord& run, const Dataset& dataset, const Label& positive,
            const std::optional<std::set<std::string>>& slice) {
  require_complete(run, "f1");
  if (!dataset.label_set().contains(positive)) {
    throw Error(ErrorCode::UNKNOWN_LABEL,
                "positive label '" + positive.name() + "' not in label set");
  }
  auto ids = resolve_slice(dataset, slice);
  return f1_from_confusion(confusion_for(run, dataset, positive, ids));
}

F1Result f1_macro(const RunRecord& run, const Dataset& dataset,
                  const std::optional<std::set<std::string>>& slice) {
  require_complete(run, "f1");
  auto ids = resolve_slice(dataset, slice);
  double sum = 0.0;
  bool all_degenerate = true;
  for (const auto& label : dataset.label_set().labels()) {
    auto result = f1_from_confusion(confusion_for(run, dataset, label, ids));
    sum += result.value;
    all_degenerate = all_degenerate && result.degenerate;
  }
  return F1Result{sum / static_cast<double>(dataset.label_set().size()),
                  all_degenerate};
}

LabelDistribution estimate_distribution(const RunRecord& run,
                                        const std::string& example_id,
                                        const std::optional<core::LabelSet>& label_set) {
  require_complete(run, "distribution");
  if (run.config.params.n_samples < 2) {
    throw Error(ErrorCode::SINGLE_SAMPLE_RUN,
                "run " + run.run_id.digest.substr(0, 12) +
                    " has n_samples=1; distributions need n >= 2");
  }
  const auto& samples = run.samples_for(example_id);

  LabelDistribution dist;
  dist.example_id = example_id;
  dist.n = static_cast<int>(samples.size());

  std::vector<Label> order;
  std::map<Label, int> counts;
  if (label_set) {
    for (const auto& label : label_set->labels()) {
      order.push_back(label);
      counts.emplace(label, 0);
    }
  }
  for (const auto& sample : samples) {
    if (!sample.parsed) {
      ++dist.unparsed_count;
      continue;
    }
    auto [it, inserted] = counts.emplace(*sample.parsed, 0);
    if (inserted) {
      if (label_set) {
        throw Error(ErrorCode::UNKNOWN_LABEL,
                    "sample parsed to '" + sample.parsed->name() +
                        "' outside the given label set");
      }
      order.push_back(*sample.parsed);
    }
    ++it->second;
  }
  for (const auto& label : order) {
    dist.label_names.push_back(label.name());
    dist.counts.push_back(counts[label]);
  }
  dist.probabilities.reserve(dist.counts.size());
  for (int count : dist.counts) {
    dist.probabilities.push_back(static_cast<double>(count) /
                                 static_cast<double>(dist.n));
  }
  dist.unparsed_mass =
      static_cast<double>(dist.unparsed_count) / static_cast<double>(dist.n);
  return dist;
}

double entropy(const LabelDistribution& dist) {
  double e = 0.0;
  for (double p : dist.probabilities) {
    if (p > 0.0) {
      e -= p * std::log(p);
    }
  }
  return e < 0.0 ? 0.0 : e;  // clamp the -0.0 that p=1 produces
}

FlipMap classify_flips(const RunRecord& baseline, const RunRecord& candidate,
                       const Dataset& dataset) {
  require_complete(baseline, "baseline");
  require_complete(candidate, "candidate");
  if (baseline.config.dataset_digest != candidate.config.dataset_digest ||
      baseline.config.dataset_digest != dataset.digest()) {
    throw Error(ErrorCode::DATASET_MISMATCH,
                "runs do not share this dataset's digest");
  }
  FlipMap flips;
  for (const auto& example : dataset.examples()) {
    const bool was = prediction_correct(baseline, example);
    const bool now = prediction_correct(candidate, example);
    FlipCategory category;
    if (was && !now) {
      category = FlipCategory::REGRESSED;
    } else if (!was && now) {
      category = FlipCategory::IMPROVED;
    } else if (was) {
      category = FlipCategory::UNFLIPPED_CORRECT;
    } else {
      category = FlipCategory::UNFLIPPED_WRONG;
    }
    flips.emplace(example.id, category);
  }
  return flips;
}

FlipCounts count_flips(const FlipMap& flips,
                       const std::optional<std::set<std::string>>& slice) {
  FlipCounts counts;
  for (const auto& [id, category] : flips) {
    if (slice && slice->count(id) == 0) {
      continue;
    }
    switch (category) {
      case FlipCategory::REGRESSED: ++counts.regressed; break;
      case FlipCategory::IMPROVED: ++counts.improved; break;
      case FlipCategory::UNFLIPPED_CORRECT: ++counts.unflipped_correct; break;
      case FlipCategory::UNFLIPPED_WRONG: ++counts.unflipped_wrong; break;
    }
  }
  return counts;
}

EntropyBreakdown entropy_by_flip(const RunRecord& sampling_run, const FlipMap& flips) {
  require_complete(sampling_run, "sampling");
  if (sampling_run.config.params.n_samples < 2) {
    throw Error(ErrorCode::SINGLE_SAMPLE_RUN,
                "entropy breakdown needs a sampling run with n >= 2");
  }

  std::vector<double> regressed, improved, unflipped_correct, unflipped_wrong;
  int zero_entropy_regressions = 0;
  for (const auto& [example_id, category] : flips) {
    const bool flipped = category == FlipCategory::REGRESSED ||
                         category == FlipCategory::IMPROVED;
    if (sampling_run.samples.count(example_id) == 0) {
      if (flipped) {
        throw Error(ErrorCode::COVERAGE_GAP,
                    "sampling run does not cover flipped example '" + example_id + "'");
      }
      continue;
    }
    const double e = entropy(estimate_distribution(sampling_run, example_id));
    switch (category) {
      case FlipCategory::REGRESSED:
        regressed.push_back(e);
        if (e == 0.0) {
          ++zero_entropy_regressions;
        }
        break;
      case FlipCategory::IMPROVED: improved.push_back(e); break;
      case FlipCategory::UNFLIPPED_CORRECT: unflipped_correct.push_back(e); break;
      case FlipCategory::UNFLIPPED_WRONG: unflipped_wrong.push_back(e); break;
    }
  }

  EntropyBreakdown breakdown;
  breakdown.regressed = finalize_group(regressed);
  breakdown.improved = finalize_group(improved);
  breakdown.unflipped_correct = finalize_group(unflipped_correct);
  breakdown.unflipped_wrong = finalize_group(unflipped_wrong);
  std::vector<double> both = unflipped_correct;
  both.insert(both.end(), unflipped_wrong.begin(), unflipped_wrong.end());
  breakdown.unflipped = finalize_group(both);
  if (!regressed.empty()) {
    breakdown.zero_entropy_regression_share =
        static_cast<double>(zero_entropy_regressions) /
        static_cast<double>(regressed.size());
  }
  return breakdown;
}

ComparisonSummary delta_report(const RunRecord& baseline, const RunRecord& candidate,
                               const Dataset& dataset,
                               const std::vector<SliceSpec>& slices,
                               const Label& positive,
                               const RunRecord* sampling_run) {
  FlipMap flips = classify_flips(baseline, candidate, dataset);

  auto build_row = [&](const std::string& name,
                       const std::optional<std::set<std::string>>& ids)
      -> SlicePairReport {
    SlicePairReport row;
    row.name = name;
    row.n = ids ? static_cast<int>(ids->size())
                : static_cast<int>(dataset.size());
    row.accuracy_baseline = accuracy(baseline, dataset, ids);
    row.accuracy_candidate = accuracy(candidate, dataset, ids);
    row.accuracy_delta = row.accuracy_candidate - row.accuracy_baseline;
    row.f1_baseline = f1(baseline, dataset, positive, ids);
    row.f1_candidate = f1(candidate, dataset, positive, ids);
    row.f1_delta = row.f1_candidate.value - row.f1_baseline.value;
    row.flips = count_flips(flips, ids);
    if (sampling_run) {
      double sum = 0.0;
      int covered = 0;
      int regressed = 0;
      int zero_regressed = 0;
      for (const auto& [id, category] : flips) {
        if (ids && ids->count(id) == 0) {
          continue;
        }
        if (sampling_run->samples.count(id) == 0) {
          continue;
        }
        double e = entropy(estimate_distribution(*sampling_run, id));
        sum += e;
        ++covered;
        if (category == FlipCategory::REGRESSED) {
          ++regressed;
          if (e == 0.0) {
            ++zero_regressed;
          }
        }
      }
      if (covered > 0) {
        row.mean_entropy = sum / covered;
      }
      if (regressed > 0) {
        row.zero_entropy_regression_share =
            static_cast<double>(zero_regressed) / static_cast<double>(regressed);
      }
    }
    return row;
  };

  ComparisonSummary summary;
  summary.dataset_id = dataset.id();
  summary.dataset_digest = dataset.digest();
  summary.baseline_run = baseline.run_id;
  summary.candidate_run = candidate.run_id;
  summary.positive_label = positive.name();
  summary.overall = build_row("overall", std::nullopt);
  const bool any_regressions = summary.overall.flips.regressed > 0;
  for (const auto& spec : slices) {
    auto ids = datasets::apply_slice(dataset, spec);
    if (ids.empty()) {
      SlicePairReport row;
      row.name = spec.name;
      row.n = 0;
      summary.slices.push_back(std::move(row));
      continue;
    }
    auto row = build_row(spec.name, ids);
    if (any_regressions) {
      auto [share, base_rate] = slice_regression_share(flips, dataset, spec, positive);
      row.share_of_regressions = share;
      row.slice_base_rate = base_rate;
    }
    summary.slices.push_back(std::move(row));
  }
  if (sampling_run) {
    summary.entropy = entropy_by_flip(*sampling_run, flips);
  }
  return summary;
}

std::pair<double, double> slice_regression_share(
    const FlipMap& flips, const Dataset& dataset, const SliceSpec& spec,
    const Label& positive,
    const std::optional<std::set<std::string>>& reference_ids) {
  std::set<std::string> slice_ids = datasets::apply_slice(dataset, spec);

  long long total_regressed = 0;
  long long slice_regressed = 0;
  for (const auto& [id, category] : flips) {
    if (category != FlipCategory::REGRESSED) {
      continue;
    }
    ++total_regressed;
    if (slice_ids.count(id) > 0) {
      ++slice_regressed;
    }
  }
  if (total_regressed == 0) {
    throw Error(ErrorCode::NO_REGRESSIONS, "flip map contains no regressions");
  }

  std::set<std::string> reference;
  if (reference_ids) {
    reference = *reference_ids;
  } else {
    for (const auto& example : dataset.examples()) {
      if (example.gold == positive) {
        reference.insert(example.id);
      }
    }
  }
  if (reference.empty()) {
    throw Error(ErrorCode::EMPTY_SLICE, "reference population is empty");
  }
  long long in_both = 0;
  for (const auto& id : reference) {
    if (slice_ids.count(id) > 0) {
      ++in_both;
    }
  }

  return {static_cast<double>(slice_regressed) / static_cast<double>(total_regressed),
          static_cast<double>(in_both) / static_cast<double>(reference.size())};
}

}  // namespace llmregress::analysis
