#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "coa/cli.hpp"
#include "coa/hashing.hpp"
#include "coa/serialize.hpp"

namespace coa::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
}

void require_file(const fs::path& path, const char* what) {
  if (path.empty() || !fs::is_regular_file(path)) {
    throw UsageError(std::string(what) + " not found: " + path.string());
  }
}

HarnessConfig config_for(const std::optional<fs::path>& path) {
  if (!path) return HarnessConfig{};
  require_file(*path, "config file");
  return load_config(*path);
}

Manifest manifest_for(const fs::path& path, std::ostream& log) {
  require_file(path, "manifest");
  Manifest m = load_manifest(path, {.require_images = false});
  for (const auto& w : m.warnings) log << "warning: " << w << '\n';
  return m;
}

std::optional<fs::path> pick_cache_dir(bool no_cache, const std::optional<fs::path>& flag,
                                       const HarnessConfig& cfg, const fs::path& fallback) {
  if (no_cache) return std::nullopt;
  if (flag) return flag;
  if (cfg.cache_dir) return cfg.cache_dir;
  return fallback;
}

json split_json(const MetricReport& r) {
  json per_split = json::object();
  for (const auto& [split, s] : r.per_split) {
    per_split[std::to_string(split)] = {{"m_clip", s.m_clip}, {"m_ram", s.m_ram}, {"n_images", s.n_images}};
  }
  return per_split;
}

std::string run_meta_json(const RunOutcome& out, const ChainConfig& cfg, const Manifest& m) {
  nlohmann::ordered_json j;
  j["config_name"] = out.config_name;
  j["config_fingerprint"] = out.fingerprint;
  j["template_id"] = cfg.templates.id;
  j["template_hashes"] = cfg.templates.hashes();
  j["model"] = cfg.model;
  j["manifest"] = m.source;
  j["n_images"] = m.entries.size();
  j["n_ok"] = out.batch.states.size();
  j["n_failed"] = out.batch.failures.size();
  std::int64_t total = 0;
  for (const auto& s : out.batch.states) total += s.total_latency_ms();
  j["total_latency_ms"] = total;
  j["mean_latency_ms"] = out.batch.states.empty() ? 0.0 : double(total) / double(out.batch.states.size());
  j["cache"] = {{"hits", out.cache.hits}, {"misses", out.cache.misses}};
  return j.dump(2) + "\n";
}

void write_failures(const fs::path& dir, const std::vector<ChainFailure>& failures) {
  auto path = dir / "failures.jsonl";
  if (failures.empty()) {
    fs::remove(path);
    return;
  }
  std::string text;
  for (const auto& f : failures) text += to_json(f).dump() + "\n";
  write_text(path, text);
}

// Runs one chain config over the manifest and writes its outputs.
RunOutcome execute_run(const Manifest& manifest, const ChainConfig& chain, BackendStack& stack,
                       const fs::path& output_dir, std::ostream& log) {
  fs::create_directories(output_dir);
  RunOutcome out;
  out.config_name = chain.name();
  out.fingerprint = chain.fingerprint();
  log << "running " << out.config_name << " over " << manifest.entries.size() << " images\n";
  out.batch = run_batch(manifest.entries, chain, stack.active());
  if (stack.cached) out.cache = stack.cached->stats();
  if (stack.mock) out.backend_calls = stack.mock->calls();

  write_transcripts(output_dir / "transcripts.jsonl", out.batch.states);
  write_failures(output_dir, out.batch.failures);
  write_text(output_dir / "run_meta.json", run_meta_json(out, chain, manifest));
  for (const auto& f : out.batch.failures) {
    log << "failed: " << f.image_id << " at " << f.stage << ": " << f.message << '\n';
  }
  return out;
}

// Scores chain states against the manifest.
struct ScoredRun {
  MetricReport report;
  std::vector<ScoreError> errors;
};

ScoredRun score_states(const Manifest& manifest, const std::vector<ChainState>& states, ModelBackend& backend,
                       const MetricConfig& metric, const ScoreOptions& opts, const std::string& fingerprint) {
  std::map<std::string, const ChainState*> by_id;
  for (const auto& s : states) by_id[s.image_id] = &s;
  std::vector<ScoreItem> items;
  for (const auto& rec : manifest.entries) {
    auto it = by_id.find(rec.id);
    if (it == by_id.end()) continue;
    items.push_back({rec, it->second->final_labels, it->second->total_latency_ms()});
  }
  ScoreBatch batch = score_batch(items, backend, metric, opts);
  ScoredRun run;
  run.report = aggregate(batch.scored, metric, static_cast<int>(batch.errors.size()), fingerprint);
  run.errors = std::move(batch.errors);
  return run;
}

std::string score_fingerprint(const std::string& chain_fp, const MetricConfig& m, bool ram_filter) {
  json j;
  j["chain"] = chain_fp;
  j["sigma"] = m.sigma;
  j["prefix"] = m.com_prompt_prefix;
  j["empty_policy"] = static_cast<int>(m.empty_policy);
  j["avg_mode"] = static_cast<int>(m.avg_mode);
  j["embed_model"] = m.embed_model;
  j["tag_model"] = m.tag_model;
  j["ram_filter"] = ram_filter;
  return sha256_hex(j.dump());
}

std::string slug(const ChainConfig& cfg) {
  switch (cfg.mode) {
    case ChainMode::Merged: return "merged";
    case ChainMode::BaselineVQA: return "baseline_vqa";
    case ChainMode::BaselineCaption: return "baseline_caption";
    case ChainMode::Actions: break;
  }
  std::string s = "actions";
  for (int a : cfg.actions) s += "_" + std::to_string(a);
  return s;
}

}  // namespace

RunOutcome cmd_run(const RunSpec& spec, std::ostream& log) {
  Manifest manifest = manifest_for(spec.manifest_path, log);
  HarnessConfig cfg = config_for(spec.config_path);
  if (spec.actions) apply_actions(cfg.chain, *spec.actions);
  if (spec.parallelism) cfg.chain.parallelism = *spec.parallelism;
  cfg.chain.validate();
  if (spec.output_dir.empty()) throw UsageError("an output directory is required");

  auto cache_dir = pick_cache_dir(spec.no_cache, spec.cache_dir, cfg, spec.output_dir / "cache");
  BackendStack stack = make_backend(spec.backend, cfg, cache_dir, spec.resume);
  return execute_run(manifest, cfg.chain, stack, spec.output_dir, log);
}

ScoreOutcome cmd_score(const ScoreSpec& spec, std::ostream& log) {
  require_file(spec.transcripts, "transcripts");
  Manifest manifest = manifest_for(spec.manifest_path, log);
  HarnessConfig cfg = config_for(spec.config_path);
  if (spec.mean_over_images) cfg.metric.avg_mode = AvgMode::MeanOverImages;
  if (spec.output_dir.empty()) throw UsageError("an output directory is required");
  fs::create_directories(spec.output_dir);

  std::vector<ChainState> states = read_transcripts(spec.transcripts);

  ScoreOutcome out;
  std::set<std::string> manifest_ids;
  for (const auto& e : manifest.entries) manifest_ids.insert(e.id);
  std::set<std::string> state_ids;
  std::vector<std::string> unknown;
  for (const auto& s : states) {
    if (!state_ids.insert(s.image_id).second) throw InputError("transcripts contain '" + s.image_id + "' twice");
    if (!manifest_ids.count(s.image_id)) unknown.push_back(s.image_id);
  }
  if (!unknown.empty()) {
    std::string msg = "transcript ids not in the manifest:";
    for (const auto& id : unknown) msg += " " + id;
    throw InputError(msg);
  }
  for (const auto& e : manifest.entries) {
    if (!state_ids.count(e.id)) out.missing_ids.push_back(e.id);
  }
  out.coverage = {static_cast<int>(manifest.entries.size() - out.missing_ids.size()),
                  static_cast<int>(manifest.entries.size())};
  if (!out.missing_ids.empty() && !spec.partial) {
    std::string msg = "transcripts do not cover the manifest; missing:";
    for (const auto& id : out.missing_ids) msg += " " + id;
    throw InputError(msg + " (use --partial to score what is there)");
  }

  // Chain fingerprint from the run metadata next to the transcripts, if any.
  std::string chain_fp;
  if (auto meta = spec.transcripts.parent_path() / "run_meta.json"; fs::is_regular_file(meta)) {
    std::ifstream in(meta);
    try {
      chain_fp = json::parse(in).value("config_fingerprint", "");
    } catch (const json::exception&) {
      log << "warning: unreadable " << meta.string() << '\n';
    }
  }

  auto cache_dir = pick_cache_dir(spec.no_cache, spec.cache_dir, cfg, spec.output_dir / "cache");
  BackendStack stack = make_backend(spec.backend, cfg, cache_dir, true);

  const bool with_filter = spec.ram_filter || cfg.chain.ram_filter;
  ScoreOptions opts{.ram_filter = false, .parallelism = spec.parallelism};
  auto plain = score_states(manifest, states, stack.active(), cfg.metric, opts,
                            score_fingerprint(chain_fp, cfg.metric, false));
  out.report = std::move(plain.report);
  out.errors = std::move(plain.errors);
  if (out.report.per_image.empty() && !out.errors.empty()) {
    throw MetricError("no image could be scored; first error: " + out.errors.front().image_id + ": " +
                      out.errors.front().message);
  }
  if (with_filter) {
    opts.ram_filter = true;
    auto filtered = score_states(manifest, states, stack.active(), cfg.metric, opts,
                                 score_fingerprint(chain_fp, cfg.metric, true));
    out.filtered = std::move(filtered.report);
    out.filtered_errors = std::move(filtered.errors);
  }

  std::vector<TableRow> rows{{spec.label, &out.report}};
  if (out.filtered) rows.push_back({spec.label + " w/ filter", &*out.filtered});
  out.table = format_metric_table(rows);
  if (out.coverage.scored != out.coverage.total) {
    out.table += "coverage: " + std::to_string(out.coverage.scored) + "/" + std::to_string(out.coverage.total) +
                 " images\n";
  }
  if (out.report.n_metric_errors > 0) {
    out.table += "metric errors: " + std::to_string(out.report.n_metric_errors) + " images excluded\n";
  }
  for (const auto& e : out.errors) log << "metric error: " << e.image_id << ": " << e.message << '\n';
  for (const auto& w : out.report.warnings) log << "warning: " << w << '\n';

  write_text(spec.output_dir / "report.json", report_json(out, cfg.metric));
  write_text(spec.output_dir / "table.txt", out.table);
  return out;
}

std::vector<ChainConfig> ablation_configs(const ChainConfig& base) {
  std::vector<ChainConfig> configs;
  for (const auto& subset : valid_action_subsets()) {
    ChainConfig c = base;
    c.mode = ChainMode::Actions;
    c.actions = subset;
    configs.push_back(std::move(c));
  }
  ChainConfig merged = base;
  merged.mode = ChainMode::Merged;
  merged.actions.clear();
  configs.push_back(std::move(merged));
  return configs;
}

AblationOutcome cmd_ablate(const AblateSpec& spec, std::ostream& log) {
  Manifest manifest = manifest_for(spec.manifest_path, log);
  HarnessConfig cfg = config_for(spec.config_path);
  if (spec.parallelism) cfg.chain.parallelism = *spec.parallelism;
  if (spec.output_dir.empty()) throw UsageError("an output directory is required");
  fs::create_directories(spec.output_dir);

  auto cache_dir = pick_cache_dir(spec.no_cache, spec.cache_dir, cfg, spec.output_dir / "cache");
  BackendStack stack = make_backend(spec.backend, cfg, cache_dir, spec.resume);

  AblationOutcome out;
  int total_failures = 0;
  for (const auto& chain : ablation_configs(cfg.chain)) {
    RunOutcome run = execute_run(manifest, chain, stack, spec.output_dir / slug(chain), log);
    ScoreOptions opts{.ram_filter = false, .parallelism = chain.parallelism};
    auto scored = score_states(manifest, run.batch.states, stack.active(), cfg.metric, opts,
                               score_fingerprint(run.fingerprint, cfg.metric, false));
    AblationRow row;
    row.name = chain.mode == ChainMode::Merged ? "MERGED" : chain.name();
    row.report = std::move(scored.report);
    row.n_failures = static_cast<int>(run.batch.failures.size());
    total_failures += row.n_failures;
    out.rows.push_back(std::move(row));
  }
  const MetricReport& base = out.rows.front().report;
  for (auto& row : out.rows) {
    row.delta_m_clip = row.report.avg_m_clip - base.avg_m_clip;
    row.delta_m_ram = row.report.avg_m_ram - base.avg_m_ram;
  }

  std::vector<TableRow> rows;
  for (const auto& r : out.rows) rows.push_back({r.name, &r.report});
  out.table = format_metric_table(rows) + "\nDelta vs " + out.rows.front().name + "\n" +
              format_metric_table(rows, &base);

  json j;
  j["baseline"] = out.rows.front().name;
  json arr = json::array();
  for (const auto& r : out.rows) {
    arr.push_back({{"name", r.name},
                   {"config_fingerprint", r.report.config_fingerprint},
                   {"avg_m_clip", r.report.avg_m_clip},
                   {"avg_m_ram", r.report.avg_m_ram},
                   {"delta_m_clip", r.delta_m_clip},
                   {"delta_m_ram", r.delta_m_ram},
                   {"per_split", split_json(r.report)},
                   {"n_failures", r.n_failures},
                   {"n_metric_errors", r.report.n_metric_errors}});
  }
  j["rows"] = arr;
  write_text(spec.output_dir / "ablation.json", j.dump(2) + "\n");
  write_text(spec.output_dir / "ablation.txt", out.table);

  if (total_failures > 0 && !spec.keep_going) {
    throw Error(std::to_string(total_failures) + " image runs failed during the ablation");
  }
  return out;
}

TimingOutcome cmd_time(const TimeSpec& spec, std::ostream& log) {
  Manifest manifest = manifest_for(spec.manifest_path, log);
  HarnessConfig cfg = config_for(spec.config_path);
  if (spec.parallelism) cfg.chain.parallelism = *spec.parallelism;

  // Cached answers would report zero latency, so timing never uses the cache.
  BackendStack stack = make_backend(spec.backend, cfg, std::nullopt, false);

  std::vector<std::pair<std::string, ChainConfig>> methods;
  ChainConfig coa_cfg = cfg.chain;
  bool full = coa_cfg.mode == ChainMode::Actions && coa_cfg.actions == ActionSubset{1, 2, 3, 4, 5};
  methods.emplace_back(full ? "CoA" : coa_cfg.name(), coa_cfg);
  for (ChainMode mode : {ChainMode::BaselineVQA, ChainMode::BaselineCaption}) {
    ChainConfig c = cfg.chain;
    c.mode = mode;
    c.actions.clear();
    methods.emplace_back(c.name(), c);
  }

  TimingOutcome out;
  for (const auto& [name, chain] : methods) {
    log << "timing " << name << '\n';
    BatchResult batch = run_batch(manifest.entries, chain, stack.active());
    out.n_failures += static_cast<int>(batch.failures.size());
    for (const auto& f : batch.failures) {
      log << "failed: " << f.image_id << " at " << f.stage << ": " << f.message << '\n';
    }
    TimingRow row;
    row.method = name;
    row.n_images = static_cast<int>(batch.states.size());
    if (row.n_images > 0) {
      double sum = 0.0;
      for (const auto& s : batch.states) sum += static_cast<double>(s.total_latency_ms());
      row.mean_ms = sum / row.n_images;
      double sq = 0.0;
      for (const auto& s : batch.states) {
        double d = static_cast<double>(s.total_latency_ms()) - row.mean_ms;
        sq += d * d;
      }
      row.stddev_ms = std::sqrt(sq / row.n_images);
    }
    out.rows.push_back(row);
  }

  std::size_t name_w = 8;
  for (const auto& r : out.rows) name_w = std::max(name_w, r.method.size() + 2);
  std::ostringstream os;
  os << std::string("Method") + std::string(name_w - 6, ' ') << "Inference time (ms)\n";
  for (const auto& r : out.rows) {
    os << r.method << std::string(name_w - r.method.size(), ' ') << format_mean_std(r.mean_ms, r.stddev_ms)
       << '\n';
  }
  out.table = os.str();

  if (spec.output_dir) {
    fs::create_directories(*spec.output_dir);
    json j = json::array();
    for (const auto& r : out.rows) {
      j.push_back({{"method", r.method}, {"n_images", r.n_images}, {"mean_ms", r.mean_ms}, {"stddev_ms", r.stddev_ms}});
    }
    write_text(*spec.output_dir / "timing.json", j.dump(2) + "\n");
    write_text(*spec.output_dir / "timing.txt", out.table);
  }
  return out;
}

}  // namespace coa::cli
