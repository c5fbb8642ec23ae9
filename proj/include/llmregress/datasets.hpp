#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "llmregress/core.hpp"

namespace llmregress::datasets {

using core::ContentHash;
using core::Label;
using core::LabelSet;

// Metadata values are flat scalars; string comparison is exact.
using MetaValue = std::variant<std::string, bool>;
using Metadata = std::map<std::string, MetaValue>;

struct Example {
  std::string id;
  std::string text;
  Label gold;
  Metadata metadata;
};

// Immutable after load; safe to share across threads.
class Dataset {
 public:
  Dataset(std::string id, LabelSet label_set, std::vector<Example> examples,
          std::string provenance = "");

  const std::string& id() const { return id_; }
  const LabelSet& label_set() const { return label_set_; }
  const std::vector<Example>& examples() const { return examples_; }
  const std::string& provenance() const { return provenance_; }
  const ContentHash& digest() const { return digest_; }

  std::size_t size() const { return examples_.size(); }
  bool contains(const std::string& example_id) const;
  const Example& example(const std::string& example_id) const;

  // Example ids in canonical (lexicographic) order. This is the order every
  // persisted run record uses, so records are invariant to file row order.
  const std::vector<std::string>& canonical_ids() const { return canonical_ids_; }

  std::size_t count_gold(const Label& label) const;

  // Key-sorted serialization with examples in canonical id order; the digest
  // is computed over these bytes.
  nlohmann::json canonical_form() const;

 private:
  std::string id_;
  LabelSet label_set_;
  std::vector<Example> examples_;
  std::string provenance_;
  ContentHash digest_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::string> canonical_ids_;
};

struct SliceClause {
  enum class Kind { METADATA_EQUALS, GOLD_EQUALS };
  Kind kind;
  std::string key;    // metadata key (METADATA_EQUALS)
  MetaValue value;    // metadata value (METADATA_EQUALS)
  Label gold;         // expected gold (GOLD_EQUALS)
};

// Conjunction of clauses; slice(D) is always a subset of D.
struct SliceSpec {
  std::string name;
  std::vector<SliceClause> clauses;

  static SliceSpec whole_dataset(const std::string& name = "whole-dataset");
  bool is_whole_dataset() const { return clauses.empty(); }

  nlohmann::json to_json() const;
  static SliceSpec from_json(const nlohmann::json& j);
};

// Loads the line-record dataset format: first line is a header object with
// fields `id` and `label_set` (ordered) plus optional `provenance`; every
// following line is a record {"id","text","label"} with optional flat "meta".
Dataset load_dataset(const std::filesystem::path& path);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// Ids of the examples satisfying every clause. Throws UNKNOWN_METADATA_KEY if
// a referenced key appears in no example at all.
std::set<std::string> apply_slice(const Dataset& dataset, const SliceSpec& spec);

bool example_matches(const Example& example, const SliceSpec& spec);

}  // namespace llmregress::datasets
