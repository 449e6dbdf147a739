#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "coa/cli.hpp"
#include "coa/server.hpp"

namespace coa::cli {

namespace {

struct BackendFlags {
  std::string fixtures;
  std::string chat, embed, tag, token;
  bool offline = false;

  void add_to(CLI::App* cmd, bool allow_offline) {
    cmd->add_option("--fixtures", fixtures, "Scripted mock fixture file (instead of endpoints)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--chat-url", chat, "Chat service base URL");
    cmd->add_option("--embed-url", embed, "Embedding service base URL");
    cmd->add_option("--tag-url", tag, "Tagging service base URL");
    cmd->add_option("--token", token, "Bearer token for the services");
    if (allow_offline) cmd->add_flag("--offline", offline, "Answer only from the cache");
  }

  BackendSpec spec() const {
    BackendSpec s;
    auto opt = [](const std::string& v) { return v.empty() ? std::nullopt : std::optional<std::string>(v); };
    s.endpoint_flags = {opt(chat), opt(embed), opt(tag), opt(token)};
    if (!fixtures.empty()) s.fixtures = fixtures;
    s.offline = offline;
    return s;
  }
};

std::optional<std::filesystem::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

std::optional<int> opt_int(int v) { return v > 0 ? std::optional<int>(v) : std::nullopt; }

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chain-of-Action generative semantic labeling harness", "coa"};
  app.require_subcommand(1);

  // run
  RunSpec run_spec;
  BackendFlags run_backend;
  std::string run_manifest, run_config, run_actions, run_out, run_cache;
  int run_par = 0;
  auto* run = app.add_subcommand("run", "Run the chain over a manifest");
  run->add_option("--manifest", run_manifest, "Manifest JSONL")->required()->check(CLI::ExistingFile);
  run->add_option("--config", run_config, "Harness config JSON")->check(CLI::ExistingFile);
  run->add_option("--actions", run_actions, "1,2,5 | merged | baseline_vqa | baseline_caption");
  run->add_option("--parallelism", run_par, "Images in flight");
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_option("--cache-dir", run_cache, "Response cache (default <out>/cache)");
  run->add_flag("--no-cache", run_spec.no_cache, "Neither read nor write the cache");
  run->add_flag("--resume", run_spec.resume, "Answer from the cache where possible");
  run->add_flag("--keep-going", run_spec.keep_going, "Exit 0 even when some images fail");
  run_backend.add_to(run, false);

  // score
  ScoreSpec score_spec;
  BackendFlags score_backend;
  std::string score_transcripts, score_manifest, score_config, score_out, score_cache;
  auto* score = app.add_subcommand("score", "Score transcripts against a manifest");
  score->add_option("--transcripts", score_transcripts, "transcripts.jsonl from run")->required()->check(CLI::ExistingFile);
  score->add_option("--manifest", score_manifest, "Manifest JSONL")->required()->check(CLI::ExistingFile);
  score->add_option("--config", score_config, "Harness config JSON")->check(CLI::ExistingFile);
  score->add_option("--out", score_out, "Output directory")->required();
  score->add_option("--cache-dir", score_cache, "Response cache (default <out>/cache)");
  score->add_option("--parallelism", score_spec.parallelism, "Images in flight")->check(CLI::PositiveNumber);
  score->add_option("--label", score_spec.label, "Row name in the table");
  score->add_flag("--no-cache", score_spec.no_cache, "Neither read nor write the cache");
  score->add_flag("--ram-filter", score_spec.ram_filter, "Add a row scored after the confidence filter");
  score->add_flag("--partial", score_spec.partial, "Score even if some manifest ids have no transcript");
  score->add_flag("--mean-over-images", score_spec.mean_over_images, "Avg over all images instead of splits");
  score_backend.add_to(score, true);

  // ablate
  AblateSpec ablate_spec;
  BackendFlags ablate_backend;
  std::string ablate_manifest, ablate_config, ablate_out, ablate_cache;
  int ablate_par = 0;
  auto* ablate = app.add_subcommand("ablate", "Run and score the action-subset ablation");
  ablate->add_option("--manifest", ablate_manifest, "Manifest JSONL")->required()->check(CLI::ExistingFile);
  ablate->add_option("--config", ablate_config, "Harness config JSON")->check(CLI::ExistingFile);
  ablate->add_option("--out", ablate_out, "Output directory")->required();
  ablate->add_option("--cache-dir", ablate_cache, "Response cache (default <out>/cache)");
  ablate->add_option("--parallelism", ablate_par, "Images in flight");
  ablate->add_flag("--no-cache", ablate_spec.no_cache, "Neither read nor write the cache");
  ablate->add_flag("--resume", ablate_spec.resume, "Answer from the cache where possible");
  ablate->add_flag("--keep-going", ablate_spec.keep_going, "Exit 0 even when some images fail");
  ablate_backend.add_to(ablate, false);

  // time
  TimeSpec time_spec;
  BackendFlags time_backend;
  std::string time_manifest, time_config, time_out;
  int time_par = 0;
  auto* timing = app.add_subcommand("time", "Latency of the chain and both baselines");
  timing->add_option("--manifest", time_manifest, "Manifest JSONL")->required()->check(CLI::ExistingFile);
  timing->add_option("--config", time_config, "Harness config JSON")->check(CLI::ExistingFile);
  timing->add_option("--out", time_out, "Output directory");
  timing->add_option("--parallelism", time_par, "Images in flight");
  time_backend.add_to(timing, false);

  // convert
  std::string conv_ann, conv_images, conv_split, conv_out;
  auto* convert = app.add_subcommand("convert", "Detection annotations + split spec -> manifest");
  convert->add_option("--annotations", conv_ann, "Annotation JSON")->required()->check(CLI::ExistingFile);
  convert->add_option("--images-dir", conv_images, "Directory holding the image files")->required();
  convert->add_option("--split-spec", conv_split, "JSONL of {id, split}")->required()->check(CLI::ExistingFile);
  convert->add_option("--out", conv_out, "Manifest JSONL to write")->required();

  // verify-splits
  std::string verify_manifest, verify_dataset;
  std::vector<int> verify_expected;
  auto* verify = app.add_subcommand("verify-splits", "Compare per-split counts with the published ones");
  verify->add_option("--manifest", verify_manifest, "Manifest JSONL")->required()->check(CLI::ExistingFile);
  auto* ds_opt = verify->add_option("--dataset", verify_dataset, "voc | coco | nus");
  auto* exp_opt = verify->add_option("--expected", verify_expected, "Four counts")->expected(4)->delimiter(',');
  ds_opt->excludes(exp_opt);

  // serve-mock
  std::string serve_fixtures, serve_host = "127.0.0.1";
  int serve_port = 8765;
  auto* serve = app.add_subcommand("serve-mock", "Serve a fixture file over the HTTP wire protocol");
  serve->add_option("--fixtures", serve_fixtures, "Mock fixture file")->required()->check(CLI::ExistingFile);
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "Port (0 picks a free one)");

  std::vector<std::string> argv_store;
  argv_store.push_back("coa");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  int failure_code = kExitRunFailure;
  try {
    if (*run) {
      run_spec.manifest_path = run_manifest;
      run_spec.config_path = opt_path(run_config);
      if (!run_actions.empty()) run_spec.actions = run_actions;
      run_spec.parallelism = opt_int(run_par);
      run_spec.backend = run_backend.spec();
      run_spec.output_dir = run_out;
      run_spec.cache_dir = opt_path(run_cache);
      auto outcome = cmd_run(run_spec, err);
      out << outcome.batch.states.size() << " ok, " << outcome.batch.failures.size() << " failed; "
          << "cache hits " << outcome.cache.hits << ", misses " << outcome.cache.misses << '\n';
      if (!outcome.batch.ok() && !run_spec.keep_going) return kExitRunFailure;
      return kExitOk;
    }
    if (*score) {
      failure_code = kExitScoreFailure;
      score_spec.transcripts = score_transcripts;
      score_spec.manifest_path = score_manifest;
      score_spec.config_path = opt_path(score_config);
      score_spec.backend = score_backend.spec();
      score_spec.output_dir = score_out;
      score_spec.cache_dir = opt_path(score_cache);
      auto outcome = cmd_score(score_spec, err);
      out << outcome.table;
      return kExitOk;
    }
    if (*ablate) {
      ablate_spec.manifest_path = ablate_manifest;
      ablate_spec.config_path = opt_path(ablate_config);
      ablate_spec.backend = ablate_backend.spec();
      ablate_spec.output_dir = ablate_out;
      ablate_spec.cache_dir = opt_path(ablate_cache);
      ablate_spec.parallelism = opt_int(ablate_par);
      auto outcome = cmd_ablate(ablate_spec, err);
      out << outcome.table;
      return kExitOk;
    }
    if (*timing) {
      time_spec.manifest_path = time_manifest;
      time_spec.config_path = opt_path(time_config);
      time_spec.backend = time_backend.spec();
      time_spec.output_dir = opt_path(time_out);
      time_spec.parallelism = opt_int(time_par);
      auto outcome = cmd_time(time_spec, err);
      out << outcome.table;
      return outcome.n_failures > 0 ? kExitRunFailure : kExitOk;
    }
    if (*convert) {
      auto spec = read_split_spec(conv_split);
      auto result = convert_coco(conv_ann, conv_images, spec);
      write_manifest(conv_out, result.manifest);
      out << "wrote " << result.manifest.entries.size() << " entries to " << conv_out << '\n';
      for (const auto& m : result.missing_images) err << "missing image: " << m << '\n';
      for (const auto& u : result.unassigned) err << "no split for image id: " << u << '\n';
      return kExitOk;
    }
    if (*verify) {
      Manifest m = load_manifest(verify_manifest, {.require_images = false});
      SplitCounts expected{};
      if (!verify_dataset.empty()) {
        expected = published_split_counts(verify_dataset);
      } else if (verify_expected.size() == SplitId::kCount) {
        std::copy(verify_expected.begin(), verify_expected.end(), expected.begin());
      } else {
        throw UsageError("give --dataset or --expected with four counts");
      }
      auto report = verify_split_counts(m, expected);
      out << report.summary();
      if (!report.ok()) {
        std::string names;
        for (const auto& n : report.failed_splits()) names += (names.empty() ? "" : ", ") + n;
        err << "split counts differ: " << names << '\n';
        return kExitCheckFailed;
      }
      return kExitOk;
    }
    if (*serve) {
      BackendServer server(mock_from_fixtures(serve_fixtures));
      out << "serving " << serve_fixtures << " on http://" << serve_host << ":" << serve_port << std::endl;
      server.run(serve_host, serve_port);
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return failure_code;
  }
  return kExitUsage;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace coa::cli
