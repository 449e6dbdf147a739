#pragma once

// Command surface of the `coa` tool. Every subcommand is also callable as
// a function so tests can drive it without spawning processes.
//
//   run            chain over a manifest -> transcripts.jsonl, run_meta.json
//   score          transcripts + manifest -> report.json, table.txt
//   ablate         the five action subsets plus the merged prompt
//   time           per-method latency, mean ± stddev
//   convert        detection annotations + split spec -> manifest
//   verify-splits  per-split counts against the published ones
//   serve-mock     the scripted mock over HTTP

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coa/backends.hpp"
#include "coa/chain.hpp"
#include "coa/datasets.hpp"
#include "coa/errors.hpp"
#include "coa/metrics.hpp"

namespace coa::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitRunFailure = 3,
  kExitScoreFailure = 4,
  kExitCheckFailed = 5,  // verify-splits found a mismatch
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Partial endpoint settings from one source (flags, file or environment).
struct EndpointOverrides {
  std::optional<std::string> chat;
  std::optional<std::string> embed;
  std::optional<std::string> tag;
  std::optional<std::string> token;
};

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

// COA_CHAT_URL, COA_EMBED_URL, COA_TAG_URL, COA_API_TOKEN.
EndpointOverrides endpoints_from_env(const EnvLookup& env);
EnvLookup process_env();

// Field by field: flag wins over file, file over environment. Returns
// nullopt when no source names any endpoint.
std::optional<HttpEndpoints> resolve_endpoints(const EndpointOverrides& flags, const EndpointOverrides& file,
                                               const EndpointOverrides& env);

// Contents of a --config JSON file. Unknown keys are errors.
struct HarnessConfig {
  ChainConfig chain;
  MetricConfig metric;
  EndpointOverrides endpoints;
  std::optional<std::filesystem::path> cache_dir;
};

// "1,2,5", "merged", "baseline_vqa", "baseline_caption".
void apply_actions(ChainConfig& cfg, const std::string& spec);

HarnessConfig load_config(const std::filesystem::path& path);
HarnessConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir);

// Where model answers come from. Exactly one of the two must be set.
struct BackendSpec {
  EndpointOverrides endpoint_flags;
  std::optional<std::filesystem::path> fixtures;
  bool offline = false;  // cache only; any miss is an error
  EnvLookup env;         // defaults to the process environment
};

struct BackendStack {
  std::shared_ptr<ModelBackend> inner;        // mock or HTTP
  std::shared_ptr<MockBackend> mock;          // set when fixtures are used
  std::shared_ptr<CachingBackend> cached;     // null when caching is off
  ModelBackend& active() { return cached ? static_cast<ModelBackend&>(*cached) : *inner; }
};

// cache_dir empty -> no cache.
BackendStack make_backend(const BackendSpec& spec, const HarnessConfig& cfg,
                          const std::optional<std::filesystem::path>& cache_dir, bool cache_read);

struct RunSpec {
  std::filesystem::path manifest_path;
  std::optional<std::filesystem::path> config_path;
  std::optional<std::string> actions;  // overrides the config file
  std::optional<int> parallelism;
  BackendSpec backend;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> cache_dir;  // default output_dir/cache
  bool resume = false;
  bool no_cache = false;
  bool keep_going = false;
};

struct RunOutcome {
  BatchResult batch;
  std::string config_name;
  std::string fingerprint;
  CacheStats cache;
  CallCounts backend_calls;  // mock only
};

RunOutcome cmd_run(const RunSpec& spec, std::ostream& log);

struct ScoreSpec {
  std::filesystem::path transcripts;
  std::filesystem::path manifest_path;
  std::optional<std::filesystem::path> config_path;
  BackendSpec backend;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> cache_dir;
  bool no_cache = false;
  bool ram_filter = false;
  bool partial = false;
  bool mean_over_images = false;
  int parallelism = 1;
  std::string label = "CoA";
};

struct Coverage {
  int scored = 0;
  int total = 0;
};

struct ScoreOutcome {
  MetricReport report;
  std::optional<MetricReport> filtered;
  std::vector<ScoreError> errors;
  std::vector<ScoreError> filtered_errors;
  Coverage coverage;
  std::vector<std::string> missing_ids;
  std::string table;
};

ScoreOutcome cmd_score(const ScoreSpec& spec, std::ostream& log);

struct AblationRow {
  std::string name;
  MetricReport report;
  double delta_m_clip = 0.0;  // against the first row
  double delta_m_ram = 0.0;
  int n_failures = 0;
};

struct AblationOutcome {
  std::vector<AblationRow> rows;
  std::string table;
};

// Configs in order: {5}, {1,5}, {1,2,5}, {1,2,3,5}, {1,2,3,4,5}, merged.
std::vector<ChainConfig> ablation_configs(const ChainConfig& base);

struct AblateSpec {
  std::filesystem::path manifest_path;
  std::optional<std::filesystem::path> config_path;
  BackendSpec backend;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> cache_dir;
  bool resume = false;
  bool no_cache = false;
  bool keep_going = false;
  std::optional<int> parallelism;
};

AblationOutcome cmd_ablate(const AblateSpec& spec, std::ostream& log);

struct TimingRow {
  std::string method;
  int n_images = 0;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;  // population
};

struct TimingOutcome {
  std::vector<TimingRow> rows;
  std::string table;
  int n_failures = 0;
};

struct TimeSpec {
  std::filesystem::path manifest_path;
  std::optional<std::filesystem::path> config_path;
  BackendSpec backend;
  std::optional<int> parallelism;
  std::optional<std::filesystem::path> output_dir;
};

// Runs the configured chain and both baselines without any cache.
TimingOutcome cmd_time(const TimeSpec& spec, std::ostream& log);

// "6110 ± 149".
std::string format_mean_std(double mean, double stddev);

// Tables with one column pair (M_clip, M_ram) per split plus Avg, in
// percent with two decimals.
struct TableRow {
  std::string name;
  const MetricReport* report;
};
// With a baseline every cell is printed as a signed difference to it.
std::string format_metric_table(const std::vector<TableRow>& rows, const MetricReport* baseline = nullptr);

// report.json content (sorted keys, full precision).
std::string report_json(const ScoreOutcome& outcome, const MetricConfig& cfg);

// Full command line. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int main(int argc, char** argv);

}  // namespace coa::cli
