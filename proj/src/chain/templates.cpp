#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "coa/chain.hpp"
#include "coa/errors.hpp"
#include "coa/hashing.hpp"

namespace coa {

namespace {

// Default wording for the five actions follows each action's role; the
// two baseline prompts are the standard captioning / VQA prompts.
constexpr std::string_view kCaption = "Generate a one-sentence caption for the image.";
constexpr std::string_view kSelfCorrect = "Is there a {entity} in the image? Answer Yes or No.";
constexpr std::string_view kAppearance =
    "The image contains these entities: {entities}.\n"
    "For each entity, describe its appearance and attributes (color, shape, size, material, state). "
    "Write one line per entity in the form \"entity: description\".";
constexpr std::string_view kRelationship =
    "The image contains these entities: {entities}.\n"
    "Their appearance:\n{appearance}\n"
    "Describe the relationships between these entities, and between each entity and the scene.";
constexpr std::string_view kFinal =
    "Entities identified so far: {entities}\n"
    "Appearance details:\n{appearance}\n"
    "Relationships: {relationships}\n"
    "Using the image together with this context, identify all entity labels present in the image. "
    "Answer with a comma-separated list of nouns only.";
constexpr std::string_view kMergedSingle =
    "Look at the image and work through the following steps in one answer. "
    "First, write a one-sentence caption. "
    "Second, list the entities in the image and check that each one is really present. "
    "Third, describe the appearance and attributes of each entity. "
    "Fourth, describe the relationships between the entities and the scene. "
    "Finally, using everything above, identify all entity labels present in the image and give them "
    "on the last line as a comma-separated list of nouns, starting with \"Labels:\".";
constexpr std::string_view kBaselineVQA = "Question: What are the names of objects in this image? Answer:";
constexpr std::string_view kBaselineCaption = "Question: what’s in the image? Answer:";

struct Marker {
  std::size_t begin;
  std::size_t end;  // one past '}'
  std::string name;
};

// All {name} markers. A '{' that does not open a well-formed marker is an error.
std::vector<Marker> find_markers(std::string_view tmpl) {
  std::vector<Marker> out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < tmpl.size() && (std::islower(static_cast<unsigned char>(tmpl[j])) || tmpl[j] == '_')) ++j;
    if (j == i + 1 || j >= tmpl.size() || tmpl[j] != '}') {
      throw ConfigError("malformed template marker at offset " + std::to_string(i));
    }
    out.push_back({i, j + 1, std::string(tmpl.substr(i + 1, j - i - 1))});
    i = j;
  }
  return out;
}

void check_slots(std::string_view name, std::string_view tmpl, std::initializer_list<std::string_view> slots) {
  if (tmpl.empty()) throw ConfigError("template '" + std::string(name) + "' is empty");
  std::map<std::string, int> counts;
  for (const auto& m : find_markers(tmpl)) ++counts[m.name];
  for (auto slot : slots) {
    auto it = counts.find(std::string(slot));
    int n = it == counts.end() ? 0 : it->second;
    if (n != 1) {
      throw ConfigError("template '" + std::string(name) + "' must contain {" + std::string(slot) +
                        "} exactly once (found " + std::to_string(n) + ")");
    }
    counts.erase(it);
  }
  if (!counts.empty()) {
    throw ConfigError("template '" + std::string(name) + "' has unknown slot {" + counts.begin()->first + "}");
  }
}

}  // namespace

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& slots) {
  std::string out;
  std::size_t pos = 0;
  std::set<std::string> used;
  for (const auto& m : find_markers(tmpl)) {
    auto it = slots.find(m.name);
    if (it == slots.end()) throw ConfigError("unbound template slot {" + m.name + "}");
    out.append(tmpl.substr(pos, m.begin - pos));
    out += it->second;
    used.insert(m.name);
    pos = m.end;
  }
  out.append(tmpl.substr(pos));
  for (const auto& [name, value] : slots) {
    if (!used.count(name)) throw ConfigError("template has no slot {" + name + "}");
  }
  return out;
}

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  t.caption = kCaption;
  t.self_correct = kSelfCorrect;
  t.appearance = kAppearance;
  t.relationship = kRelationship;
  t.final = kFinal;
  t.merged_single = kMergedSingle;
  t.baseline_vqa = kBaselineVQA;
  t.baseline_caption = kBaselineCaption;
  return t;
}

PromptTemplates PromptTemplates::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read templates file: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("templates file is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("templates file must hold a JSON object");

  PromptTemplates t = defaults();
  std::map<std::string, std::string*> fields = {
      {"id", &t.id},
      {"caption", &t.caption},
      {"self_correct", &t.self_correct},
      {"appearance", &t.appearance},
      {"relationship", &t.relationship},
      {"final", &t.final},
      {"merged_single", &t.merged_single},
      {"baseline_vqa", &t.baseline_vqa},
      {"baseline_caption", &t.baseline_caption},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown template key '" + key + "'");
    if (!value.is_string()) throw ConfigError("template '" + key + "' must be a string");
    *it->second = value.get<std::string>();
  }
  t.validate();
  return t;
}

void PromptTemplates::validate() const {
  if (id.empty()) throw ConfigError("template id must not be empty");
  check_slots("caption", caption, {});
  check_slots("self_correct", self_correct, {"entity"});
  check_slots("appearance", appearance, {"entities"});
  check_slots("relationship", relationship, {"entities", "appearance"});
  check_slots("final", final, {"entities", "appearance", "relationships"});
  check_slots("merged_single", merged_single, {});
  check_slots("baseline_vqa", baseline_vqa, {});
  check_slots("baseline_caption", baseline_caption, {});
}

std::map<std::string, std::string> PromptTemplates::hashes() const {
  return {
      {"caption", sha256_hex(caption)},
      {"self_correct", sha256_hex(self_correct)},
      {"appearance", sha256_hex(appearance)},
      {"relationship", sha256_hex(relationship)},
      {"final", sha256_hex(final)},
      {"merged_single", sha256_hex(merged_single)},
      {"baseline_vqa", sha256_hex(baseline_vqa)},
      {"baseline_caption", sha256_hex(baseline_caption)},
  };
}

}  // namespace coa
