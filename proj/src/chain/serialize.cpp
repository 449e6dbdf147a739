#include "coa/serialize.hpp"

#include <fstream>

#include "coa/errors.hpp"

namespace coa {

ojson to_json(const LabelSet& labels) {
  ojson j = ojson::array();
  for (const auto& l : labels) j.push_back(l);
  return j;
}

LabelSet labelset_from_json(const ojson& j) {
  if (!j.is_array()) throw InputError("label list must be a JSON array");
  std::vector<std::string> raw;
  for (const auto& v : j) {
    if (!v.is_string()) throw InputError("labels must be strings");
    raw.push_back(v.get<std::string>());
  }
  return labelset_from(std::span<const std::string>(raw));
}

ojson to_json(const Interaction& it) {
  ojson j;
  j["action"] = std::string(to_string(it.action));
  j["prompt"] = it.prompt;
  j["image_attached"] = it.image_attached;
  j["raw_response"] = it.raw_response;
  j["latency_ms"] = it.latency_ms;
  j["cache_hit"] = it.cache_hit;
  return j;
}

Interaction interaction_from_json(const ojson& j) {
  try {
    Interaction it;
    auto kind = parse_action_kind(j.at("action").get<std::string>());
    if (!kind) throw InputError("unknown action '" + j.at("action").get<std::string>() + "'");
    it.action = *kind;
    it.prompt = j.at("prompt").get<std::string>();
    it.image_attached = j.at("image_attached").get<bool>();
    it.raw_response = j.at("raw_response").get<std::string>();
    it.latency_ms = j.at("latency_ms").get<std::int64_t>();
    it.cache_hit = j.value("cache_hit", false);
    return it;
  } catch (const ojson::exception& e) {
    throw InputError(std::string("malformed interaction: ") + e.what());
  }
}

ojson to_json(const ChainState& s) {
  ojson j;
  j["image_id"] = s.image_id;
  j["caption"] = s.caption ? ojson(*s.caption) : ojson(nullptr);
  j["initial_entities"] = to_json(s.initial_entities);
  j["corrected_entities"] = s.corrected_entities ? to_json(*s.corrected_entities) : ojson(nullptr);
  ojson notes = ojson::object();
  for (const auto& [k, v] : s.appearance_notes) notes[k] = v;
  j["appearance_notes"] = notes;
  j["relationship_notes"] = s.relationship_notes;
  j["final_labels"] = to_json(s.final_labels);
  ojson transcript = ojson::array();
  for (const auto& it : s.transcript) transcript.push_back(to_json(it));
  j["transcript"] = transcript;
  j["warnings"] = s.warnings;
  return j;
}

ChainState chain_state_from_json(const ojson& j) {
  try {
    ChainState s;
    s.image_id = j.at("image_id").get<std::string>();
    if (!j.at("caption").is_null()) s.caption = j.at("caption").get<std::string>();
    s.initial_entities = labelset_from_json(j.at("initial_entities"));
    if (!j.at("corrected_entities").is_null()) s.corrected_entities = labelset_from_json(j.at("corrected_entities"));
    for (const auto& [k, v] : j.at("appearance_notes").items()) s.appearance_notes[k] = v.get<std::string>();
    s.relationship_notes = j.at("relationship_notes").get<std::string>();
    s.final_labels = labelset_from_json(j.at("final_labels"));
    for (const auto& it : j.at("transcript")) s.transcript.push_back(interaction_from_json(it));
    s.warnings = j.value("warnings", std::vector<std::string>{});
    return s;
  } catch (const ojson::exception& e) {
    throw InputError(std::string("malformed chain state: ") + e.what());
  }
}

ojson to_json(const ChainFailure& f) {
  ojson j;
  j["image_id"] = f.image_id;
  j["stage"] = f.stage;
  j["message"] = f.message;
  return j;
}

void write_transcripts(const std::filesystem::path& path, const std::vector<ChainState>& states) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& s : states) out << to_json(s).dump() << '\n';
  if (!out) throw InputError("write failed: " + path.string());
}

std::vector<ChainState> read_transcripts(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::vector<ChainState> states;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const ojson::parse_error& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    states.push_back(chain_state_from_json(j));
  }
  return states;
}

}  // namespace coa
