#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coa/cli.hpp"

namespace coa::cli {

using json = nlohmann::json;

EndpointOverrides endpoints_from_env(const EnvLookup& env) {
  EndpointOverrides e;
  e.chat = env("COA_CHAT_URL");
  e.embed = env("COA_EMBED_URL");
  e.tag = env("COA_TAG_URL");
  e.token = env("COA_API_TOKEN");
  return e;
}

EnvLookup process_env() {
  return [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
}

std::optional<HttpEndpoints> resolve_endpoints(const EndpointOverrides& flags, const EndpointOverrides& file,
                                               const EndpointOverrides& env) {
  auto pick = [](const std::optional<std::string>& a, const std::optional<std::string>& b,
                 const std::optional<std::string>& c) -> std::optional<std::string> {
    if (a) return a;
    if (b) return b;
    return c;
  };
  auto chat = pick(flags.chat, file.chat, env.chat);
  auto embed = pick(flags.embed, file.embed, env.embed);
  auto tag = pick(flags.tag, file.tag, env.tag);
  if (!chat && !embed && !tag) return std::nullopt;
  HttpEndpoints out;
  // A single base URL is enough when one server hosts all three endpoints.
  std::string fallback = chat ? *chat : embed ? *embed : *tag;
  out.chat_url = chat.value_or(fallback);
  out.embed_url = embed.value_or(fallback);
  out.tag_url = tag.value_or(fallback);
  out.bearer_token = pick(flags.token, file.token, env.token);
  return out;
}

void apply_actions(ChainConfig& cfg, const std::string& spec) {
  if (spec == "merged") {
    cfg.mode = ChainMode::Merged;
    cfg.actions.clear();
    return;
  }
  if (spec == "baseline_vqa") {
    cfg.mode = ChainMode::BaselineVQA;
    cfg.actions.clear();
    return;
  }
  if (spec == "baseline_caption") {
    cfg.mode = ChainMode::BaselineCaption;
    cfg.actions.clear();
    return;
  }
  ActionSubset actions;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      int n = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      actions.insert(n);
    } catch (const std::logic_error&) {
      throw ConfigError("bad action list '" + spec + "'");
    }
  }
  cfg.mode = ChainMode::Actions;
  cfg.actions = std::move(actions);
  cfg.validate();
}

namespace {

void apply_actions_json(ChainConfig& cfg, const json& v) {
  if (v.is_string()) {
    apply_actions(cfg, v.get<std::string>());
    return;
  }
  if (!v.is_array()) throw ConfigError("'actions' must be a list of numbers or a mode name");
  std::string spec;
  for (const auto& a : v) {
    if (!a.is_number_integer()) throw ConfigError("'actions' entries must be integers");
    spec += (spec.empty() ? "" : ",") + std::to_string(a.get<int>());
  }
  apply_actions(cfg, spec);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() ? base / path : path;
}

template <typename T>
T get_as(const json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

HarnessConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");

  HarnessConfig cfg;
  for (const auto& [key, v] : root.items()) {
    const char* k = key.c_str();
    if (key == "actions") {
      apply_actions_json(cfg.chain, v);
    } else if (key == "templates_path") {
      cfg.chain.templates = PromptTemplates::from_file(resolve(base_dir, get_as<std::string>(v, k)));
    } else if (key == "model") {
      cfg.chain.model = get_as<std::string>(v, k);
    } else if (key == "max_tokens") {
      cfg.chain.max_tokens = get_as<int>(v, k);
    } else if (key == "yes_no_max_tokens") {
      cfg.chain.yes_no_max_tokens = get_as<int>(v, k);
    } else if (key == "temperature") {
      cfg.chain.temperature = get_as<double>(v, k);
    } else if (key == "seed") {
      if (!v.is_null()) cfg.chain.seed = get_as<std::int64_t>(v, k);
    } else if (key == "parallelism") {
      cfg.chain.parallelism = get_as<int>(v, k);
    } else if (key == "ram_filter") {
      cfg.chain.ram_filter = get_as<bool>(v, k);
    } else if (key == "sigma") {
      cfg.chain.sigma = cfg.metric.sigma = get_as<double>(v, k);
    } else if (key == "com_prompt_prefix") {
      cfg.metric.com_prompt_prefix = get_as<std::string>(v, k);
    } else if (key == "empty_prediction_policy") {
      auto p = get_as<std::string>(v, k);
      if (p == "score_half") cfg.metric.empty_policy = EmptyPredictionPolicy::ScoreHalf;
      else if (p == "score_zero") cfg.metric.empty_policy = EmptyPredictionPolicy::ScoreZero;
      else throw ConfigError("empty_prediction_policy must be score_half or score_zero");
    } else if (key == "avg_mode") {
      auto m = get_as<std::string>(v, k);
      if (m == "splits") cfg.metric.avg_mode = AvgMode::MeanOverSplits;
      else if (m == "images") cfg.metric.avg_mode = AvgMode::MeanOverImages;
      else throw ConfigError("avg_mode must be splits or images");
    } else if (key == "embed_model") {
      cfg.metric.embed_model = get_as<std::string>(v, k);
    } else if (key == "tag_model") {
      cfg.metric.tag_model = get_as<std::string>(v, k);
    } else if (key == "cache_dir") {
      cfg.cache_dir = resolve(base_dir, get_as<std::string>(v, k));
    } else if (key == "filter") {
      if (!v.is_object()) throw ConfigError("'filter' must be an object");
      for (const auto& [fk, fv] : v.items()) {
        if (fk == "blocklist") {
          auto words = get_as<std::vector<std::string>>(fv, "filter.blocklist");
          cfg.chain.filter_cfg.blocklist.clear();
          for (const auto& w : words) {
            auto n = normalize_label(w);
            if (!n.empty()) cfg.chain.filter_cfg.blocklist.insert(n);
          }
        } else if (fk == "extra_blocklist_path") {
          cfg.chain.filter_cfg.extra_blocklist_path = resolve(base_dir, get_as<std::string>(fv, "filter"));
        } else if (fk == "noun_lexicon_path") {
          cfg.chain.filter_cfg.noun_lexicon_path = resolve(base_dir, get_as<std::string>(fv, "filter"));
        } else if (fk == "min_token_len") {
          cfg.chain.filter_cfg.min_token_len = get_as<int>(fv, "filter.min_token_len");
        } else {
          throw ConfigError("unknown filter key '" + fk + "'");
        }
      }
    } else if (key == "endpoints") {
      if (!v.is_object()) throw ConfigError("'endpoints' must be an object");
      for (const auto& [ek, ev] : v.items()) {
        auto s = get_as<std::string>(ev, "endpoints");
        if (ek == "chat") cfg.endpoints.chat = s;
        else if (ek == "embed") cfg.endpoints.embed = s;
        else if (ek == "tag") cfg.endpoints.tag = s;
        else if (ek == "token") cfg.endpoints.token = s;
        else throw ConfigError("unknown endpoints key '" + ek + "'");
      }
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  cfg.chain.validate();
  cfg.metric.validate();
  return cfg;
}

HarnessConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

namespace {

// Stand-in for a model service when only the cache may answer.
class OfflineBackend final : public ModelBackend {
 protected:
  ChatResponse do_chat(const ChatRequest&) override { throw miss(); }
  EmbedResponse do_embed(const EmbedRequest&) override { throw miss(); }
  TagResponse do_tag(const TagRequest&) override { throw miss(); }

 private:
  static TransportError miss() { return TransportError("offline mode: request not in cache"); }
};

}  // namespace

BackendStack make_backend(const BackendSpec& spec, const HarnessConfig& cfg,
                          const std::optional<std::filesystem::path>& cache_dir, bool cache_read) {
  BackendStack stack;
  EnvLookup env = spec.env ? spec.env : process_env();
  auto endpoints = resolve_endpoints(spec.endpoint_flags, cfg.endpoints, endpoints_from_env(env));

  if (spec.offline) {
    if (!cache_dir) throw UsageError("--offline needs a cache directory");
    stack.inner = std::make_shared<OfflineBackend>();
    cache_read = true;
  } else if (spec.fixtures) {
    // Fixtures win silently over environment endpoints but not over
    // explicitly given ones.
    auto explicit_eps = resolve_endpoints(spec.endpoint_flags, cfg.endpoints, {});
    if (explicit_eps) throw UsageError("give either endpoints or --fixtures, not both");
    stack.mock = mock_from_fixtures(*spec.fixtures);
    stack.inner = stack.mock;
  } else if (endpoints) {
    stack.inner = std::make_shared<HttpBackend>(*endpoints);
  } else {
    throw UsageError("no model backend: give --fixtures or endpoints (flags, config file or COA_*_URL)");
  }

  if (cache_dir) {
    auto cache = std::make_shared<const ResponseCache>(*cache_dir);
    stack.cached = std::make_shared<CachingBackend>(stack.inner, cache, cache_read);
  }
  return stack;
}

}  // namespace coa::cli
