#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "llmregress/error.hpp"

namespace llmregress::core {

// Canonical label token. Comparison is case-insensitive after
// canonicalization (lowercase, trimmed); only the canonical form is stored.
class Label {
 public:
  Label() = default;
  explicit Label(const std::string& raw);

  const std::string& name() const { return name_; }

  bool operator==(const Label& other) const { return name_ == other.name_; }
  bool operator!=(const Label& other) const { return name_ != other.name_; }
  bool operator<(const Label& other) const { return name_ < other.name_; }

 private:
  std::string name_;
};

// Ordered, distinct labels. The position of a label is the index i used in
// per-label counts and the entropy sum; it is fixed at dataset creation.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<Label> labels);

  static LabelSet from_names(const std::vector<std::string>& names);

  const std::vector<Label>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  const Label& at(std::size_t i) const { return labels_.at(i); }

  bool contains(const Label& label) const;
  // Index of `label`, or -1.
  int index_of(const Label& label) const;

  std::vector<std::string> names() const;

  bool operator==(const LabelSet& other) const { return labels_ == other.labels_; }

 private:
  std::vector<Label> labels_;
};

struct ContentHash {
  std::string algorithm;  // e.g. "sha256"
  std::string digest;     // lowercase hex

  bool operator==(const ContentHash& other) const {
    return algorithm == other.algorithm && digest == other.digest;
  }
  bool operator!=(const ContentHash& other) const { return !(*this == other); }

  std::string to_string() const { return algorithm + ":" + digest; }
  static ContentHash parse(const std::string& text);
};

// Normalizes a label token: trim ASCII whitespace, lowercase. Idempotent.
std::string canonicalize_token(const std::string& raw);

// SHA-256 over the given bytes, hex-encoded. Deterministic across runs and
// platforms; total (never throws on any input).
ContentHash content_hash(const std::string& canonical_bytes);

// Key-sorted, whitespace-free UTF-8 serialization used for every hashed
// object in the store layer. nlohmann objects already iterate in key order.
std::string canonical_json(const nlohmann::json& value);

ContentHash hash_json(const nlohmann::json& value);

// First 8 bytes of sha256(text), big-endian. Used to derive deterministic
// seeds from names.
std::uint64_t hash64(const std::string& text);

}  // namespace llmregress::core
