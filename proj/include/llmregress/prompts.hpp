#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "llmregress/core.hpp"
#include "llmregress/datasets.hpp"

namespace llmregress::prompts {

using core::ContentHash;
using core::Label;
using core::LabelSet;

enum class PromptMode { COMPLETION, CHAT };

const char* prompt_mode_name(PromptMode mode);
PromptMode prompt_mode_from_name(const std::string& name);

// Immutable once registered. `body` contains exactly one `{text}` placeholder.
struct PromptTemplate {
  std::string prompt_id;
  int version = 0;
  std::optional<int> parent_version;
  PromptMode mode = PromptMode::COMPLETION;
  std::string body;
  std::optional<std::string> system_preamble;
  std::string created_at;  // ISO-8601
  std::string notes;

  void validate() const;
  nlohmann::json canonical_form() const;
  ContentHash content_hash() const;
};

struct ChatMessage {
  std::string role;  // "system" | "user"
  std::string content;

  bool operator==(const ChatMessage& other) const {
    return role == other.role && content == other.content;
  }
};

// Pure substitution output; byte-identical for identical inputs.
struct RenderedPrompt {
  PromptMode mode = PromptMode::COMPLETION;
  std::string completion_text;        // completion mode
  std::vector<ChatMessage> messages;  // chat mode

  nlohmann::json canonical_form() const;
};

// `{text}` replaced with example.text verbatim; nothing else changes.
RenderedPrompt render(const PromptTemplate& tmpl, const datasets::Example& example);

// Adapts a completion-mode template to a chat endpoint by sending the whole
// rendered body as one user message. A chat template cannot be flattened to a
// completion endpoint (ENDPOINT_MISMATCH).
RenderedPrompt render_for(const PromptTemplate& tmpl, const datasets::Example& example,
                          PromptMode endpoint_mode);

struct LabelParseRule {
  LabelSet label_set;
  std::string strategy = "token-longest-first-v1";
};

// Deterministic parse of raw model output: lowercase, scan canonical labels
// longest-first as tokens bounded by non-[a-z0-9-] characters, claiming the
// matched span so shorter labels never fire inside longer ones. Exactly one
// distinct label -> that label; zero or several -> nullopt (UNPARSED).
std::optional<Label> parse_label(const std::string& raw, const LabelParseRule& rule);

// Versioned on-disk registry: prompts/<prompt_id>/<version>.rec. Writes are
// serialized by a lock file; reads never take the lock.
class PromptRegistry {
 public:
  explicit PromptRegistry(std::filesystem::path root);

  // Persists the template with version = 1 + max existing (or 1).
  // template_in.version, when nonzero, must equal the assigned version.
  int register_prompt(const PromptTemplate& template_in);

  PromptTemplate load(const std::string& prompt_id, int version) const;
  std::vector<int> versions(const std::string& prompt_id) const;
  std::vector<std::string> prompt_ids() const;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

}  // namespace llmregress::prompts
