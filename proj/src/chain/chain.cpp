#include "coa/chain.hpp"

#include <algorithm>
#include <cctype>
#include <exception>
#include <regex>

#include <json.hpp>
#include <omp.h>

#include "coa/errors.hpp"
#include "coa/hashing.hpp"

namespace coa {

// ---------------------------------------------------------------------------
// Configuration

const std::vector<ActionSubset>& valid_action_subsets() {
  static const std::vector<ActionSubset> subsets = {
      {5}, {1, 5}, {1, 2, 5}, {1, 2, 3, 5}, {1, 2, 3, 4, 5},
  };
  return subsets;
}

ChainConfig ChainConfig::with_actions(ActionSubset actions) {
  ChainConfig cfg;
  cfg.mode = ChainMode::Actions;
  cfg.actions = std::move(actions);
  return cfg;
}

ChainConfig ChainConfig::with_mode(ChainMode mode) {
  ChainConfig cfg;
  cfg.mode = mode;
  if (mode != ChainMode::Actions) cfg.actions.clear();
  return cfg;
}

void ChainConfig::validate() const {
  if (mode == ChainMode::Actions) {
    const auto& valid = valid_action_subsets();
    if (std::find(valid.begin(), valid.end(), actions) == valid.end()) {
      std::string got;
      for (int a : actions) got += (got.empty() ? "" : ",") + std::to_string(a);
      throw ConfigError("unsupported action subset {" + got +
                        "}; use one of {5} {1,5} {1,2,5} {1,2,3,5} {1,2,3,4,5}");
    }
  } else if (!actions.empty()) {
    throw ConfigError("merged and baseline modes cannot be combined with action numbers");
  }
  templates.validate();
  if (!(sigma > 0.0 && sigma < 1.0)) throw ConfigError("sigma must lie in (0,1)");
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (max_tokens < 1 || yes_no_max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (filter_cfg.min_token_len < 1) throw ConfigError("min_token_len must be >= 1");
}

std::string ChainConfig::name() const {
  switch (mode) {
    case ChainMode::Merged: return "Merged single";
    case ChainMode::BaselineVQA: return "Baseline VQA";
    case ChainMode::BaselineCaption: return "Baseline caption";
    case ChainMode::Actions: break;
  }
  std::string out = "Action ";
  bool first = true;
  for (int a : actions) {
    if (!first) out += "+";
    out += std::to_string(a);
    first = false;
  }
  return out;
}

std::string ChainConfig::fingerprint() const {
  nlohmann::json j;
  j["mode"] = static_cast<int>(mode);
  j["actions"] = std::vector<int>(actions.begin(), actions.end());
  j["templates"] = templates.hashes();
  j["template_id"] = templates.id;
  j["blocklist"] = std::vector<std::string>(filter_cfg.blocklist.begin(), filter_cfg.blocklist.end());
  j["extra_blocklist"] = filter_cfg.extra_blocklist_path ? filter_cfg.extra_blocklist_path->string() : "";
  j["lexicon"] = filter_cfg.noun_lexicon_path ? filter_cfg.noun_lexicon_path->string() : "";
  j["min_token_len"] = filter_cfg.min_token_len;
  j["ram_filter"] = ram_filter;
  j["sigma"] = sigma;
  j["model"] = model;
  j["max_tokens"] = max_tokens;
  j["yes_no_max_tokens"] = yes_no_max_tokens;
  j["temperature"] = temperature;
  j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Response parsing

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool starts_with_word(std::string_view s, std::string_view word) {
  if (s.size() <= word.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != word[i]) return false;
  }
  return std::isspace(static_cast<unsigned char>(s[word.size()])) != 0;
}

// Strip list decoration: "1.", "2)", "-", "*", "•", then "and"/"or", then
// a leading article.
std::string_view strip_list_prefix(std::string_view s) {
  s = trim(s);
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    if (s.starts_with("-") || s.starts_with("*") || s.starts_with("+")) {
      s = trim(s.substr(1));
      changed = true;
    } else if (s.starts_with("•")) {
      s = trim(s.substr(std::string_view("•").size()));
      changed = true;
    } else if (std::isdigit(static_cast<unsigned char>(s.front()))) {
      std::size_t i = 0;
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      if (i < s.size() && (s[i] == '.' || s[i] == ')' || s[i] == ':')) {
        s = trim(s.substr(i + 1));
        changed = true;
      }
    }
  }
  for (std::string_view conj : {"and", "or"}) {
    if (starts_with_word(s, conj)) s = trim(s.substr(conj.size()));
  }
  for (std::string_view article : {"a", "an", "the"}) {
    if (starts_with_word(s, article)) {
      s = trim(s.substr(article.size()));
      break;
    }
  }
  return s;
}

std::vector<std::string_view> split_any(std::string_view s, std::string_view delims) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || delims.find(s[i]) != std::string_view::npos) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

}  // namespace

LabelSet parse_label_list(std::string_view response) {
  // "the street and a bus" is two labels, not one.
  static const std::regex conjunction(R"(\s+(?:and|&)\s+)", std::regex::icase);
  std::vector<std::string> raw;
  for (auto piece : split_any(response, ",;\n")) {
    std::string text(piece);
    for (std::sregex_token_iterator it(text.begin(), text.end(), conjunction, -1), end; it != end; ++it) {
      std::string part = it->str();
      auto item = strip_list_prefix(part);
      if (!item.empty()) raw.emplace_back(item);
    }
  }
  return labelset_from(std::span<const std::string>(raw));
}

std::map<std::string, std::string> parse_appearance(std::string_view response, const LabelSet& entities) {
  std::map<std::string, std::string> notes;
  std::vector<std::string> unmatched;
  for (auto line : split_any(response, "\n")) {
    auto body = strip_list_prefix(line);
    if (body.empty()) continue;
    auto colon = body.find(':');
    if (colon != std::string_view::npos) {
      std::string label = normalize_label(strip_list_prefix(body.substr(0, colon)));
      if (entities.contains(label) && !notes.count(label)) {
        notes[label] = std::string(trim(body.substr(colon + 1)));
        continue;
      }
    }
    unmatched.emplace_back(trim(line));
  }
  if (notes.empty()) {
    auto blob = trim(response);
    if (!blob.empty()) notes[std::string(kUnparsedAppearanceKey)] = std::string(blob);
    return notes;
  }
  if (!unmatched.empty()) {
    std::string rest;
    for (const auto& u : unmatched) rest += (rest.empty() ? "" : "\n") + u;
    notes[std::string(kUnparsedAppearanceKey)] = rest;
  }
  return notes;
}

YesNo parse_yes_no(std::string_view answer) {
  std::string folded = casefold(trim(answer));
  std::size_t i = 0;
  while (i < folded.size() && !std::isalpha(static_cast<unsigned char>(folded[i]))) ++i;
  std::size_t j = i;
  while (j < folded.size() && std::isalpha(static_cast<unsigned char>(folded[j]))) ++j;
  std::string_view word(folded.data() + i, j - i);
  if (word == "yes") return YesNo::Yes;
  if (word == "no") return YesNo::No;
  return YesNo::Ambiguous;
}

std::string render_entities(const LabelSet& entities) {
  return entities.empty() ? "none" : entities.join(", ");
}

std::string render_appearance(const std::map<std::string, std::string>& notes, const LabelSet& entities) {
  std::string out;
  auto add = [&](const std::string& key, const std::string& value) {
    if (!out.empty()) out += "\n";
    out += key == kUnparsedAppearanceKey ? value : key + ": " + value;
  };
  for (const auto& label : entities) {
    if (auto it = notes.find(label); it != notes.end()) add(label, it->second);
  }
  if (auto it = notes.find(std::string(kUnparsedAppearanceKey)); it != notes.end()) add(it->first, it->second);
  return out.empty() ? "none" : out;
}

// ---------------------------------------------------------------------------
// Actions

namespace {

ChatResponse ask(const ActionContext& ctx, ChainState& state, ActionKind action, std::string prompt,
                 int max_tokens, std::string subject = {}) {
  ChatRequest req;
  req.model = ctx.cfg.model;
  req.prompt = std::move(prompt);
  req.image = ctx.image;
  req.max_tokens = max_tokens;
  req.temperature = ctx.cfg.temperature;
  req.seed = ctx.cfg.seed;
  req.action = action;
  req.template_id = ctx.cfg.templates.id;
  req.subject = std::move(subject);

  ChatResponse resp = ctx.backend.chat(req);
  Interaction it;
  it.action = action;
  it.prompt = std::move(req.prompt);
  it.image_attached = ctx.image != nullptr;
  it.raw_response = resp.text;
  it.latency_ms = resp.latency_ms;
  it.cache_hit = resp.cache_hit;
  state.transcript.push_back(std::move(it));
  return resp;
}

bool is_soft_failure(const std::exception& e) {
  return dynamic_cast<const TransportError*>(&e) != nullptr || dynamic_cast<const ProtocolError*>(&e) != nullptr;
}

}  // namespace

void run_caption_action(const ActionContext& ctx, ChainState& state) {
  auto resp = ask(ctx, state, ActionKind::Caption, ctx.cfg.templates.caption, ctx.cfg.max_tokens);
  state.caption = resp.text;
  state.initial_entities = ctx.filter.filter(resp.text);
}

void run_self_correct(const ActionContext& ctx, ChainState& state) {
  std::vector<std::string> kept;
  for (const auto& entity : state.initial_entities) {
    std::string prompt = render_template(ctx.cfg.templates.self_correct, {{"entity", entity}});
    auto resp = ask(ctx, state, ActionKind::SelfCorrect, std::move(prompt), ctx.cfg.yes_no_max_tokens, entity);
    switch (parse_yes_no(resp.text)) {
      case YesNo::Yes: kept.push_back(entity); break;
      case YesNo::No: break;
      case YesNo::Ambiguous:
        state.warnings.push_back("self_correct: ambiguous answer \"" + resp.text + "\" for '" + entity +
                                 "'; kept");
        kept.push_back(entity);
        break;
    }
  }
  state.corrected_entities = LabelSet::from_normalized(std::move(kept));
}

void run_appearance(const ActionContext& ctx, ChainState& state) {
  const LabelSet& entities = state.working_entities();
  if (entities.empty()) return;
  std::string prompt = render_template(ctx.cfg.templates.appearance, {{"entities", render_entities(entities)}});
  try {
    auto resp = ask(ctx, state, ActionKind::Appearance, std::move(prompt), ctx.cfg.max_tokens);
    state.appearance_notes = parse_appearance(resp.text, entities);
  } catch (const Error& e) {
    if (!is_soft_failure(e)) throw;
    state.warnings.push_back(std::string("appearance: ") + e.what());
    state.appearance_notes.clear();
  }
}

void run_relationship(const ActionContext& ctx, ChainState& state) {
  const LabelSet& entities = state.working_entities();
  if (entities.empty()) return;
  std::string prompt =
      render_template(ctx.cfg.templates.relationship,
                      {{"entities", render_entities(entities)},
                       {"appearance", render_appearance(state.appearance_notes, entities)}});
  try {
    auto resp = ask(ctx, state, ActionKind::Relationship, std::move(prompt), ctx.cfg.max_tokens);
    state.relationship_notes = resp.text;
  } catch (const Error& e) {
    if (!is_soft_failure(e)) throw;
    state.warnings.push_back(std::string("relationship: ") + e.what());
    state.relationship_notes.clear();
  }
}

void run_final(const ActionContext& ctx, ChainState& state) {
  const LabelSet& entities = state.working_entities();
  const std::string relationships = state.relationship_notes.empty() ? "none" : state.relationship_notes;
  std::string prompt = render_template(ctx.cfg.templates.final,
                                       {{"entities", render_entities(entities)},
                                        {"appearance", render_appearance(state.appearance_notes, entities)},
                                        {"relationships", relationships}});
  auto resp = ask(ctx, state, ActionKind::Final, std::move(prompt), ctx.cfg.max_tokens);
  state.final_labels = parse_label_list(resp.text);
}

void run_merged_single(const ActionContext& ctx, ChainState& state) {
  auto resp = ask(ctx, state, ActionKind::MergedSingle, ctx.cfg.templates.merged_single, ctx.cfg.max_tokens);
  std::string_view text = resp.text;
  // Prefer the explicit "Labels:" line when the model produced one.
  std::string folded = casefold(text);
  if (auto pos = folded.rfind("labels:"); pos != std::string::npos && folded.size() == text.size()) {
    text = text.substr(pos + std::string_view("labels:").size());
  }
  state.final_labels = parse_label_list(text);
}

void run_baseline_vqa(const ActionContext& ctx, ChainState& state) {
  auto resp = ask(ctx, state, ActionKind::BaselineVQA, ctx.cfg.templates.baseline_vqa, ctx.cfg.max_tokens);
  state.final_labels = parse_label_list(resp.text);
}

void run_baseline_caption(const ActionContext& ctx, ChainState& state) {
  auto resp = ask(ctx, state, ActionKind::BaselineCaption, ctx.cfg.templates.baseline_caption, ctx.cfg.max_tokens);
  state.caption = resp.text;
  state.final_labels = ctx.filter.filter(resp.text);
}

// ---------------------------------------------------------------------------
// Chain and batch

ChainResult run_chain(const ImageRecord& image, const ChainConfig& cfg, const CaptionFilter& filter,
                      ModelBackend& backend) {
  ChainResult result;
  std::string stage = "load_image";
  try {
    ActionContext ctx{cfg, filter, backend, ImagePayload::from_file(image.image_ref)};
    ChainState state;
    state.image_id = image.id;

    auto step = [&](const char* name, void (*action)(const ActionContext&, ChainState&)) {
      stage = name;
      action(ctx, state);
    };
    switch (cfg.mode) {
      case ChainMode::Actions:
        if (cfg.runs(1)) step("caption", run_caption_action);
        if (cfg.runs(2)) step("self_correct", run_self_correct);
        if (cfg.runs(3)) step("appearance", run_appearance);
        if (cfg.runs(4)) step("relationship", run_relationship);
        if (cfg.runs(5)) step("final", run_final);
        break;
      case ChainMode::Merged: step("merged_single", run_merged_single); break;
      case ChainMode::BaselineVQA: step("baseline_vqa", run_baseline_vqa); break;
      case ChainMode::BaselineCaption: step("baseline_caption", run_baseline_caption); break;
    }
    result.state = std::move(state);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    result.failure = ChainFailure{image.id, stage, e.what()};
  }
  return result;
}

ChainResult run_chain(const ImageRecord& image, const ChainConfig& cfg, ModelBackend& backend) {
  cfg.validate();
  CaptionFilter filter(cfg.filter_cfg);
  return run_chain(image, cfg, filter, backend);
}

namespace {

BatchResult collect(std::vector<ChainResult>&& results) {
  BatchResult out;
  for (auto& r : results) {
    if (r.state) out.states.push_back(std::move(*r.state));
    else if (r.failure) out.failures.push_back(std::move(*r.failure));
  }
  return out;
}

}  // namespace

BatchResult run_batch_serial(std::span<const ImageRecord> images, const ChainConfig& cfg, ModelBackend& backend) {
  cfg.validate();
  CaptionFilter filter(cfg.filter_cfg);
  std::vector<ChainResult> results;
  results.reserve(images.size());
  for (const auto& image : images) results.push_back(run_chain(image, cfg, filter, backend));
  return collect(std::move(results));
}

BatchResult run_batch(std::span<const ImageRecord> images, const ChainConfig& cfg, ModelBackend& backend) {
  cfg.validate();
  CaptionFilter filter(cfg.filter_cfg);
  std::vector<ChainResult> results(images.size());
  std::exception_ptr fatal;
  const long n = static_cast<long>(images.size());

  // Images are independent; each chain stays sequential inside its thread.
#pragma omp parallel for schedule(dynamic, 1) num_threads(cfg.parallelism)
  for (long i = 0; i < n; ++i) {
    try {
      results[i] = run_chain(images[i], cfg, filter, backend);
    } catch (...) {
#pragma omp critical(coa_batch_fatal)
      if (!fatal) fatal = std::current_exception();
    }
  }
  if (fatal) std::rethrow_exception(fatal);
  return collect(std::move(results));
}

}  // namespace coa
