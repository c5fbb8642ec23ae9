#include "llmregress/datasets.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

namespace llmregress::datasets {

namespace {

using nlohmann::json;

json meta_to_json(const Metadata& meta) {
  json out = json::object();
  for (const auto& [key, value] : meta) {
    if (std::holds_alternative<bool>(value)) {
      out[key] = std::get<bool>(value);
    } else {
      out[key] = std::get<std::string>(value);
    }
  }
  return out;
}

MetaValue meta_value_from_json(const json& j, int line_no, const std::string& key) {
  if (j.is_boolean()) {
    return j.get<bool>();
  }
  if (j.is_string()) {
    return j.get<std::string>();
  }
  throw Error(ErrorCode::MALFORMED_RECORD,
              "line " + std::to_string(line_no) + ": meta key '" + key +
                  "' must be a string or boolean");
}

std::string meta_value_repr(const MetaValue& value) {
  if (std::holds_alternative<bool>(value)) {
    return std::get<bool>(value) ? "true" : "false";
  }
  return std::get<std::string>(value);
}

}  // namespace

Dataset::Dataset(std::string id, LabelSet label_set, std::vector<Example> examples,
                 std::string provenance)
    : id_(std::move(id)),
      label_set_(std::move(label_set)),
      examples_(std::move(examples)),
      provenance_(std::move(provenance)) {
  if (examples_.empty()) {
    throw Error(ErrorCode::EMPTY_DATASET, "dataset '" + id_ + "' has no examples");
  }
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const Example& e = examples_[i];
    if (e.id.empty()) {
      throw Error(ErrorCode::MALFORMED_RECORD, "example with empty id");
    }
    if (e.text.empty()) {
      throw Error(ErrorCode::MALFORMED_RECORD, "example '" + e.id + "' has empty text");
    }
    if (!label_set_.contains(e.gold)) {
      throw Error(ErrorCode::UNKNOWN_LABEL,
                  "example '" + e.id + "' gold '" + e.gold.name() +
                      "' not in declared label set");
    }
    auto [it, inserted] = index_.emplace(e.id, i);
    if (!inserted) {
      throw Error(ErrorCode::DUPLICATE_ID, "duplicate example id '" + e.id + "'");
    }
  }
  canonical_ids_.reserve(examples_.size());
  for (const auto& [eid, idx] : index_) {
    canonical_ids_.push_back(eid);
  }
  digest_ = core::hash_json(canonical_form());
}

bool Dataset::contains(const std::string& example_id) const {
  return index_.count(example_id) > 0;
}

const Example& Dataset::example(const std::string& example_id) const {
  auto it = index_.find(example_id);
  if (it == index_.end()) {
    throw Error(ErrorCode::UNKNOWN_EXAMPLE,
                "no example '" + example_id + "' in dataset '" + id_ + "'");
  }
  return examples_[it->second];
}

std::size_t Dataset::count_gold(const Label& label) const {
  return static_cast<std::size_t>(
      std::count_if(examples_.begin(), examples_.end(),
                    [&](const Example& e) { return e.gold == label; }));
}

nlohmann::json Dataset::canonical_form() const {
  json examples = json::array();
  for (const auto& eid : canonical_ids_) {
    const Example& e = example(eid);
    json record = {{"id", e.id}, {"text", e.text}, {"label", e.gold.name()}};
    if (!e.metadata.empty()) {
      record["meta"] = meta_to_json(e.metadata);
    }
    examples.push_back(std::move(record));
  }
  return json{{"id", id_},
              {"label_set", label_set_.names()},
              {"provenance", provenance_},
              {"examples", std::move(examples)}};
}

SliceSpec SliceSpec::whole_dataset(const std::string& name) {
  return SliceSpec{name, {}};
}

nlohmann::json SliceSpec::to_json() const {
  json meta = json::object();
  json out = {{"name", name}};
  for (const auto& clause : clauses) {
    if (clause.kind == SliceClause::Kind::GOLD_EQUALS) {
      out["gold"] = clause.gold.name();
    } else if (std::holds_alternative<bool>(clause.value)) {
      meta[clause.key] = std::get<bool>(clause.value);
    } else {
      meta[clause.key] = std::get<std::string>(clause.value);
    }
  }
  if (!meta.empty()) {
    out["meta"] = std::move(meta);
  }
  return out;
}

SliceSpec SliceSpec::from_json(const nlohmann::json& j) {
  SliceSpec spec;
  spec.name = j.value("name", "");
  if (j.contains("gold")) {
    SliceClause clause;
    clause.kind = SliceClause::Kind::GOLD_EQUALS;
    clause.gold = Label(j.at("gold").get<std::string>());
    spec.clauses.push_back(std::move(clause));
  }
  if (j.contains("meta")) {
    for (const auto& [key, value] : j.at("meta").items()) {
      SliceClause clause;
      clause.kind = SliceClause::Kind::METADATA_EQUALS;
      clause.key = key;
      if (value.is_boolean()) {
        clause.value = value.get<bool>();
      } else if (value.is_string()) {
        clause.value = value.get<std::string>();
      } else {
        throw Error(ErrorCode::INVALID_ARGUMENT,
                    "slice '" + spec.name + "' meta '" + key +
                        "' must be a string or boolean");
      }
      spec.clauses.push_back(std::move(clause));
    }
  }
  if (spec.name.empty()) {
    throw Error(ErrorCode::INVALID_ARGUMENT, "slice spec needs a name");
  }
  return spec;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IO_ERROR, "cannot open dataset file " + path.string());
  }

  std::string line;
  int line_no = 0;

  auto parse_line = [&](const std::string& text) -> json {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorCode::MALFORMED_RECORD,
                  "line " + std::to_string(line_no) + ": not a JSON object");
    }
    return j;
  };

  // Header line.
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::MALFORMED_RECORD, "missing header line");
  }
  ++line_no;
  json header = parse_line(line);
  if (!header.contains("id") || !header.contains("label_set")) {
    throw Error(ErrorCode::MALFORMED_RECORD,
                "header must declare 'id' and 'label_set'");
  }
  std::vector<std::string> label_names;
  for (const auto& name : header.at("label_set")) {
    label_names.push_back(name.get<std::string>());
  }
  LabelSet label_set = LabelSet::from_names(label_names);
  std::string dataset_id = header.at("id").get<std::string>();
  std::string provenance = header.value("provenance", "");

  std::vector<Example> examples;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    json record = parse_line(line);
    for (const char* field : {"id", "text", "label"}) {
      if (!record.contains(field) || !record.at(field).is_string()) {
        throw Error(ErrorCode::MALFORMED_RECORD,
                    "line " + std::to_string(line_no) + ": missing string field '" +
                        field + "'");
      }
    }
    Example e;
    e.id = record.at("id").get<std::string>();
    e.text = record.at("text").get<std::string>();
    Label gold(record.at("label").get<std::string>());
    if (!label_set.contains(gold)) {
      throw Error(ErrorCode::UNKNOWN_LABEL,
                  "line " + std::to_string(line_no) + ": label '" + gold.name() +
                      "' not in declared label set");
    }
    e.gold = gold;
    if (record.contains("meta")) {
      if (!record.at("meta").is_object()) {
        throw Error(ErrorCode::MALFORMED_RECORD,
                    "line " + std::to_string(line_no) + ": 'meta' must be an object");
      }
      for (const auto& [key, value] : record.at("meta").items()) {
        e.metadata.emplace(key, meta_value_from_json(value, line_no, key));
      }
    }
    examples.push_back(std::move(e));
  }

  try {
    return Dataset(std::move(dataset_id), std::move(label_set), std::move(examples),
                   std::move(provenance));
  } catch (const Error&) {
    throw;  // validation errors already carry context
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  if (!path.parent_path().empty()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::IO_ERROR, "cannot write dataset file " + path.string());
  }
  json header = {{"id", dataset.id()}, {"label_set", dataset.label_set().names()}};
  if (!dataset.provenance().empty()) {
    header["provenance"] = dataset.provenance();
  }
  out << header.dump() << "\n";
  for (const auto& eid : dataset.canonical_ids()) {
    const Example& e = dataset.example(eid);
    json record = {{"id", e.id}, {"text", e.text}, {"label", e.gold.name()}};
    if (!e.metadata.empty()) {
      record["meta"] = meta_to_json(e.metadata);
    }
    out << record.dump() << "\n";
  }
}

bool example_matches(const Example& example, const SliceSpec& spec) {
  for (const auto& clause : spec.clauses) {
    if (clause.kind == SliceClause::Kind::GOLD_EQUALS) {
      if (!(example.gold == clause.gold)) {
        return false;
      }
      continue;
    }
    auto it = example.metadata.find(clause.key);
    if (it == example.metadata.end() || !(it->second == clause.value)) {
      return false;
    }
  }
  return true;
}

std::set<std::string> apply_slice(const Dataset& dataset, const SliceSpec& spec) {
  for (const auto& clause : spec.clauses) {
    if (clause.kind != SliceClause::Kind::METADATA_EQUALS) {
      continue;
    }
    bool seen = std::any_of(dataset.examples().begin(), dataset.examples().end(),
                            [&](const Example& e) {
                              return e.metadata.count(clause.key) > 0;
                            });
    if (!seen) {
      throw Error(ErrorCode::UNKNOWN_METADATA_KEY,
                  "slice '" + spec.name + "' references metadata key '" + clause.key +
                      "' (= " + meta_value_repr(clause.value) +
                      ") present in no example");
    }
  }
  std::set<std::string> ids;
  for (const auto& e : dataset.examples()) {
    if (example_matches(e, spec)) {
      ids.insert(e.id);
    }
  }
  return ids;
}

}  // namespace llmregress::datasets
