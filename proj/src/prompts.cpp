#include "llmregress/prompts.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "llmregress/fslock.hpp"

namespace llmregress::prompts {

namespace {

using nlohmann::json;

constexpr const char* kPlaceholder = "{text}";

int count_placeholders(const std::string& body) {
  int count = 0;
  std::size_t pos = 0;
  while ((pos = body.find(kPlaceholder, pos)) != std::string::npos) {
    ++count;
    pos += std::strlen(kPlaceholder);
  }
  return count;
}

bool is_token_char(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || c == '-';
}

}  // namespace

const char* prompt_mode_name(PromptMode mode) {
  return mode == PromptMode::COMPLETION ? "completion" : "chat";
}

PromptMode prompt_mode_from_name(const std::string& name) {
  if (name == "completion") return PromptMode::COMPLETION;
  if (name == "chat") return PromptMode::CHAT;
  throw Error(ErrorCode::INVALID_ARGUMENT, "unknown prompt mode '" + name + "'");
}

void PromptTemplate::validate() const {
  if (prompt_id.empty()) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "prompt_id must be non-empty");
  }
  int n = count_placeholders(body);
  if (n == 0) {
    throw Error(ErrorCode::PLACEHOLDER_MISSING,
                "prompt body has no {text} placeholder");
  }
  if (n > 1) {
    throw Error(ErrorCode::INVALID_ARGUMENT,
                "prompt body has " + std::to_string(n) + " {text} placeholders");
  }
  if (parent_version && version > 0 && *parent_version >= version) {
    throw Error(ErrorCode::INVALID_ARGUMENT,
                "parent_version must be smaller than version");
  }
}

nlohmann::json PromptTemplate::canonical_form() const {
  json j = {{"prompt_id", prompt_id},
            {"version", version},
            {"mode", prompt_mode_name(mode)},
            {"body", body},
            {"created_at", created_at},
            {"notes", notes}};
  j["parent_version"] = parent_version ? json(*parent_version) : json(nullptr);
  j["system_preamble"] = system_preamble ? json(*system_preamble) : json(nullptr);
  return j;
}

ContentHash PromptTemplate::content_hash() const {
  return core::hash_json(canonical_form());
}

nlohmann::json RenderedPrompt::canonical_form() const {
  if (mode == PromptMode::COMPLETION) {
    return json{{"mode", "completion"}, {"text", completion_text}};
  }
  json msgs = json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", m.role}, {"content", m.content}});
  }
  return json{{"mode", "chat"}, {"messages", std::move(msgs)}};
}

RenderedPrompt render(const PromptTemplate& tmpl, const datasets::Example& example) {
  tmpl.validate();
  std::string text = tmpl.body;
  auto pos = text.find(kPlaceholder);
  text.replace(pos, std::strlen(kPlaceholder), example.text);

  RenderedPrompt out;
  out.mode = tmpl.mode;
  if (tmpl.mode == PromptMode::COMPLETION) {
    out.completion_text = std::move(text);
  } else {
    if (tmpl.system_preamble && !tmpl.system_preamble->empty()) {
      out.messages.push_back({"system", *tmpl.system_preamble});
    }
    out.messages.push_back({"user", std::move(text)});
  }
  return out;
}

RenderedPrompt render_for(const PromptTemplate& tmpl, const datasets::Example& example,
                          PromptMode endpoint_mode) {
  if (tmpl.mode == endpoint_mode) {
    return render(tmpl, example);
  }
  if (tmpl.mode == PromptMode::CHAT) {
    throw Error(ErrorCode::ENDPOINT_MISMATCH,
                "chat template '" + tmpl.prompt_id +
                    "' cannot target a completion endpoint");
  }
  RenderedPrompt completion = render(tmpl, example);
  RenderedPrompt out;
  out.mode = PromptMode::CHAT;
  if (tmpl.system_preamble && !tmpl.system_preamble->empty()) {
    out.messages.push_back({"system", *tmpl.system_preamble});
  }
  out.messages.push_back({"user", std::move(completion.completion_text)});
  return out;
}

std::optional<Label> parse_label(const std::string& raw, const LabelParseRule& rule) {
  std::string lowered;
  lowered.reserve(raw.size());
  for (char c : raw) {
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }

  // Longest labels first so "non-toxic" is consumed before "toxic" is tried.
  std::vector<const Label*> ordered;
  for (const auto& label : rule.label_set.labels()) {
    ordered.push_back(&label);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Label* a, const Label* b) {
                     return a->name().size() > b->name().size();
                   });

  std::vector<bool> claimed(lowered.size(), false);
  std::optional<Label> found;
  int distinct = 0;
  for (const Label* label : ordered) {
    const std::string& name = label->name();
    bool matched = false;
    std::size_t pos = 0;
    while ((pos = lowered.find(name, pos)) != std::string::npos) {
      std::size_t end = pos + name.size();
      bool left_ok = pos == 0 || !is_token_char(lowered[pos - 1]);
      bool right_ok = end == lowered.size() || !is_token_char(lowered[end]);
      bool overlap = false;
      for (std::size_t i = pos; i < end && !overlap; ++i) {
        overlap = claimed[i];
      }
      if (left_ok && right_ok && !overlap) {
        matched = true;
        for (std::size_t i = pos; i < end; ++i) {
          claimed[i] = true;
        }
      }
      pos = end;
    }
    if (matched) {
      ++distinct;
      found = *label;
    }
  }
  if (distinct == 1) {
    return found;
  }
  return std::nullopt;  // UNPARSED
}

PromptRegistry::PromptRegistry(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

int PromptRegistry::register_prompt(const PromptTemplate& template_in) {
  template_in.validate();
  DirectoryLock lock(root_ / ".lock");

  auto existing = versions(template_in.prompt_id);
  int next = existing.empty() ? 1 : existing.back() + 1;
  if (template_in.version != 0 && template_in.version != next) {
    throw Error(ErrorCode::VERSION_CONFLICT,
                "prompt '" + template_in.prompt_id + "' version " +
                    std::to_string(template_in.version) + " conflicts; next is " +
                    std::to_string(next));
  }

  PromptTemplate tmpl = template_in;
  tmpl.version = next;
  if (tmpl.parent_version && *tmpl.parent_version >= tmpl.version) {
    throw Error(ErrorCode::INVALID_ARGUMENT,
                "parent_version must be smaller than the assigned version");
  }

  auto dir = root_ / tmpl.prompt_id;
  std::filesystem::create_directories(dir);
  auto path = dir / (std::to_string(tmpl.version) + ".rec");
  if (std::filesystem::exists(path)) {
    throw Error(ErrorCode::VERSION_CONFLICT,
                "registry file already exists: " + path.string());
  }

  nlohmann::json record = tmpl.canonical_form();
  record["content_hash"] = tmpl.content_hash().to_string();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::IO_ERROR, "cannot write " + path.string());
  }
  out << record.dump() << "\n";
  return tmpl.version;
}

PromptTemplate PromptRegistry::load(const std::string& prompt_id, int version) const {
  auto path = root_ / prompt_id / (std::to_string(version) + ".rec");
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::UNKNOWN_PROMPT,
                "unknown prompt version " + prompt_id + "/" + std::to_string(version));
  }
  nlohmann::json record = nlohmann::json::parse(in, nullptr, false);
  if (record.is_discarded()) {
    throw Error(ErrorCode::RECORD_CORRUPT, "unparsable registry record " + path.string());
  }
  PromptTemplate tmpl;
  tmpl.prompt_id = record.at("prompt_id").get<std::string>();
  tmpl.version = record.at("version").get<int>();
  if (!record.at("parent_version").is_null()) {
    tmpl.parent_version = record.at("parent_version").get<int>();
  }
  tmpl.mode = prompt_mode_from_name(record.at("mode").get<std::string>());
  tmpl.body = record.at("body").get<std::string>();
  if (!record.at("system_preamble").is_null()) {
    tmpl.system_preamble = record.at("system_preamble").get<std::string>();
  }
  tmpl.created_at = record.at("created_at").get<std::string>();
  tmpl.notes = record.at("notes").get<std::string>();

  auto stored = core::ContentHash::parse(record.at("content_hash").get<std::string>());
  if (stored != tmpl.content_hash()) {
    throw Error(ErrorCode::RECORD_CORRUPT,
                "registry hash mismatch for " + path.string());
  }
  return tmpl;
}

std::vector<int> PromptRegistry::versions(const std::string& prompt_id) const {
  std::vector<int> out;
  auto dir = root_ / prompt_id;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".rec") {
      continue;
    }
    try {
      out.push_back(std::stoi(entry.path().stem().string()));
    } catch (const std::exception&) {
      continue;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> PromptRegistry::prompt_ids() const {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(root_, ec)) {
    if (entry.is_directory() && entry.path().filename().string().front() != '.') {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace llmregress::prompts
