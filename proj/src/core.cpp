#include "llmregress/core.hpp"

#include <algorithm>
#include <cctype>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

namespace llmregress::core {

Label::Label(const std::string& raw) : name_(canonicalize_token(raw)) {
  if (name_.empty()) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "label must be a non-empty token");
  }
}

LabelSet::LabelSet(std::vector<Label> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "label set needs at least 2 labels");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    for (std::size_t j = i + 1; j < labels_.size(); ++j) {
      if (labels_[i] == labels_[j]) {
        throw Error(ErrorCode::INVALID_ARGUMENT,
                    "duplicate label '" + labels_[i].name() + "' in label set");
      }
    }
  }
}

LabelSet LabelSet::from_names(const std::vector<std::string>& names) {
  std::vector<Label> labels;
  labels.reserve(names.size());
  for (const auto& name : names) {
    labels.emplace_back(name);
  }
  return LabelSet(std::move(labels));
}

bool LabelSet::contains(const Label& label) const {
  return index_of(label) >= 0;
}

int LabelSet::index_of(const Label& label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

std::vector<std::string> LabelSet::names() const {
  std::vector<std::string> out;
  out.reserve(labels_.size());
  for (const auto& l : labels_) {
    out.push_back(l.name());
  }
  return out;
}

ContentHash ContentHash::parse(const std::string& text) {
  auto pos = text.find(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 >= text.size()) {
    throw Error(ErrorCode::RECORD_CORRUPT, "bad content hash '" + text + "'");
  }
  return ContentHash{text.substr(0, pos), text.substr(pos + 1)};
}

std::string canonicalize_token(const std::string& raw) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t begin = 0;
  std::size_t end = raw.size();
  while (begin < end && is_space(static_cast<unsigned char>(raw[begin]))) ++begin;
  while (end > begin && is_space(static_cast<unsigned char>(raw[end - 1]))) --end;
  std::string out = raw.substr(begin, end - begin);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

ContentHash content_hash(const std::string& canonical_bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  EVP_Digest(canonical_bytes.data(), canonical_bytes.size(), md, &md_len,
             EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string digest;
  digest.reserve(md_len * 2);
  for (unsigned int i = 0; i < md_len; ++i) {
    digest.push_back(hex[md[i] >> 4]);
    digest.push_back(hex[md[i] & 0x0f]);
  }
  return ContentHash{"sha256", digest};
}

std::string canonical_json(const nlohmann::json& value) {
  return value.dump();
}

ContentHash hash_json(const nlohmann::json& value) {
  return content_hash(canonical_json(value));
}

std::uint64_t hash64(const std::string& text) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  EVP_Digest(text.data(), text.size(), md, &md_len, EVP_sha256(), nullptr);
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) {
    out = (out << 8) | md[i];
  }
  return out;
}

}  // namespace llmregress::core
