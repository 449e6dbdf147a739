#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "coa/cli.hpp"
#include "coa/serialize.hpp"
#include "coa/server.hpp"
#include "test_support.hpp"

using namespace coa;
using namespace coa::cli;
using coa_test::TempDir;
namespace fs = std::filesystem;

namespace {

const fs::path kChain = coa_test::fixture_dir() / "chain";
const fs::path kSuite = coa_test::fixture_dir() / "suite";

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string p(const fs::path& path) { return path.string(); }

EnvLookup no_env() {
  return [](const char*) { return std::optional<std::string>{}; };
}

// Strips the fields that legitimately differ between a live and a cached run.
std::vector<ChainState> content_only(std::vector<ChainState> states) {
  for (auto& s : states) {
    for (auto& i : s.transcript) {
      i.latency_ms = 0;
      i.cache_hit = false;
    }
  }
  return states;
}

}  // namespace

TEST_CASE("config parsing") {
  TempDir dir;
  auto cfg = parse_config(R"({"actions": [1, 2, 5], "sigma": 0.6, "avg_mode": "images",
                              "empty_prediction_policy": "score_zero", "seed": 7,
                              "filter": {"blocklist": ["Dogs"], "min_token_len": 3},
                              "endpoints": {"chat": "http://h:1"}})",
                          dir.path());
  CHECK(cfg.chain.actions == std::set<int>{1, 2, 5});
  CHECK(cfg.chain.sigma == 0.6);
  CHECK(cfg.metric.sigma == 0.6);
  CHECK(cfg.metric.avg_mode == AvgMode::MeanOverImages);
  CHECK(cfg.metric.empty_policy == EmptyPredictionPolicy::ScoreZero);
  CHECK(cfg.chain.seed == 7);
  CHECK(cfg.chain.filter_cfg.blocklist.count("dog") == 1);
  CHECK(cfg.endpoints.chat == "http://h:1");

  CHECK_THROWS_AS(parse_config(R"({"sigmaa": 0.5})", dir.path()), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"filter": {"blocklst": []}})", dir.path()), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"actions": [2, 5]})", dir.path()), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"sigma": "high"})", dir.path()), ConfigError);
  CHECK_THROWS_AS(parse_config("[", dir.path()), ConfigError);

  auto merged = parse_config(R"({"actions": "merged"})", dir.path());
  CHECK(merged.chain.mode == ChainMode::Merged);
  ChainConfig c;
  apply_actions(c, "1,5");
  CHECK(c.actions == std::set<int>{1, 5});
  CHECK_THROWS_AS(apply_actions(c, "1,x"), ConfigError);
}

TEST_CASE("endpoint precedence: flag over file over environment") {
  EndpointOverrides flags, file, env;
  CHECK_FALSE(resolve_endpoints(flags, file, env));
  env.chat = "http://env";
  env.token = "envtoken";
  auto r = resolve_endpoints(flags, file, env);
  REQUIRE(r);
  CHECK(r->chat_url == "http://env");
  CHECK(r->embed_url == "http://env");
  CHECK(r->bearer_token == "envtoken");
  file.chat = "http://file";
  file.tag = "http://file-tag";
  r = resolve_endpoints(flags, file, env);
  CHECK(r->chat_url == "http://file");
  CHECK(r->tag_url == "http://file-tag");
  flags.chat = "http://flag";
  flags.token = "flagtoken";
  r = resolve_endpoints(flags, file, env);
  CHECK(r->chat_url == "http://flag");
  CHECK(r->tag_url == "http://file-tag");
  CHECK(r->bearer_token == "flagtoken");

  auto from_env = endpoints_from_env([](const char* name) -> std::optional<std::string> {
    if (std::string(name) == "COA_EMBED_URL") return "http://e";
    return std::nullopt;
  });
  CHECK(from_env.embed == "http://e");
  CHECK_FALSE(from_env.chat);
}

TEST_CASE("backend selection") {
  HarnessConfig cfg;
  BackendSpec spec;
  spec.env = no_env();
  CHECK_THROWS_AS(make_backend(spec, cfg, std::nullopt, false), UsageError);

  spec.fixtures = kChain / "mock.json";
  spec.env = [](const char* n) -> std::optional<std::string> {
    if (std::string(n) == "COA_CHAT_URL") return "http://127.0.0.1:9";
    return std::nullopt;
  };
  auto stack = make_backend(spec, cfg, std::nullopt, false);
  CHECK(stack.mock);
  CHECK_FALSE(stack.cached);

  spec.endpoint_flags.chat = "http://127.0.0.1:9";
  CHECK_THROWS_AS(make_backend(spec, cfg, std::nullopt, false), UsageError);
}

TEST_CASE("usage errors exit 2") {
  TempDir dir;
  CHECK(invoke({}).code == kExitUsage);
  CHECK(invoke({"run", "--manifest", p(dir / "missing.jsonl"), "--out", p(dir / "o"), "--fixtures",
             p(kChain / "mock.json")})
            .code == kExitUsage);
  CHECK(invoke({"run", "--manifest", p(kChain / "manifest.jsonl"), "--out", p(dir / "o")}).code == kExitUsage);
  CHECK(invoke({"run", "--manifest", p(kChain / "manifest.jsonl"), "--out", p(dir / "o"), "--fixtures",
             p(kChain / "mock.json"), "--actions", "2,5"})
            .code == kExitUsage);
  CHECK(invoke({"frobnicate"}).code == kExitUsage);
}

TEST_CASE("run writes transcripts; resume answers from the cache") {
  TempDir dir;
  RunSpec spec;
  spec.manifest_path = kChain / "manifest.jsonl";
  spec.backend.fixtures = kChain / "mock.json";
  spec.backend.env = no_env();
  spec.output_dir = dir / "run";
  std::ostringstream log;
  auto first = cmd_run(spec, log);
  CHECK(first.batch.ok());
  CHECK(first.backend_calls.chat > 0);
  auto states = read_transcripts(dir / "run" / "transcripts.jsonl");
  REQUIRE(states.size() == 4);
  CHECK_FALSE(fs::exists(dir / "run" / "failures.jsonl"));
  auto meta = nlohmann::json::parse(coa_test::read_file(dir / "run" / "run_meta.json"));
  CHECK(meta.at("config_fingerprint") == first.fingerprint);

  spec.resume = true;
  auto second = cmd_run(spec, log);
  CHECK(second.backend_calls.chat == 0);
  CHECK(second.cache.misses == 0);
  CHECK(second.cache.hits == first.cache.misses);
  auto resumed = read_transcripts(dir / "run" / "transcripts.jsonl");
  for (const auto& s : resumed)
    for (const auto& i : s.transcript) CHECK(i.cache_hit);
  CHECK(content_only(resumed) == content_only(states));
}

TEST_CASE("a failing image exits 3 unless --keep-going") {
  TempDir dir;
  coa_test::write_file(dir / "e.jpg", "an image nobody scripted");
  std::string manifest = coa_test::read_file(kChain / "manifest.jsonl");
  // Absolute paths so the copy can live elsewhere.
  auto m = load_manifest(kChain / "manifest.jsonl");
  ImageRecord extra;
  extra.id = "e";
  extra.image_ref = p(dir / "e.jpg");
  extra.split = SplitId(1);
  m.entries.push_back(extra);
  write_manifest(dir / "m.jsonl", make_manifest(m.entries, "test"));

  std::vector<std::string> args{"run", "--manifest", p(dir / "m.jsonl"), "--out", p(dir / "o"), "--fixtures",
                                p(kChain / "mock.json")};
  auto r = invoke(args);
  CHECK(r.code == kExitRunFailure);
  CHECK(r.out.find("4 ok, 1 failed") != std::string::npos);
  auto failures = coa_test::read_file(dir / "o" / "failures.jsonl");
  CHECK(failures.find("\"caption\"") != std::string::npos);
  args.push_back("--keep-going");
  CHECK(invoke(args).code == kExitOk);
}

TEST_CASE("score: table, report, coverage, filter row and id mismatch") {
  TempDir dir;
  const std::string mock = p(kSuite / "mock.json");
  REQUIRE(invoke({"run", "--manifest", p(kSuite / "manifest.jsonl"), "--out", p(dir / "run"), "--fixtures", mock})
              .code == kExitOk);
  auto r = invoke({"score", "--transcripts", p(dir / "run" / "transcripts.jsonl"), "--manifest",
                p(kSuite / "manifest.jsonl"), "--out", p(dir / "score"), "--fixtures", mock, "--ram-filter"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("Split-0") != std::string::npos);
  CHECK(r.out.find("w/ filter") != std::string::npos);
  CHECK(coa_test::read_file(dir / "score" / "table.txt") == r.out);
  auto report = nlohmann::json::parse(coa_test::read_file(dir / "score" / "report.json"));
  CHECK(report.at("per_image").size() == 10);
  CHECK(report.at("avg").at("m_clip").get<double>() == doctest::Approx(0.5));
  CHECK(report.contains("with_filter"));

  // Drop the first two transcripts.
  auto states = read_transcripts(dir / "run" / "transcripts.jsonl");
  states.erase(states.begin(), states.begin() + 2);
  write_transcripts(dir / "part.jsonl", states);
  std::vector<std::string> partial{"score", "--transcripts", p(dir / "part.jsonl"), "--manifest",
                                   p(kSuite / "manifest.jsonl"), "--out", p(dir / "score2"), "--fixtures", mock};
  CHECK(invoke(partial).code == kExitScoreFailure);
  partial.push_back("--partial");
  r = invoke(partial);
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("coverage: 8/10 images") != std::string::npos);

  // Transcripts from another manifest.
  REQUIRE(invoke({"run", "--manifest", p(kChain / "manifest.jsonl"), "--out", p(dir / "chain"), "--fixtures",
               p(kChain / "mock.json")})
              .code == kExitOk);
  r = invoke({"score", "--transcripts", p(dir / "chain" / "transcripts.jsonl"), "--manifest",
           p(kSuite / "manifest.jsonl"), "--out", p(dir / "score3"), "--fixtures", mock});
  CHECK(r.code == kExitScoreFailure);
  CHECK(r.err.find("not in the manifest") != std::string::npos);
}

TEST_CASE("score --offline reuses the scoring cache") {
  TempDir dir;
  const std::string mock = p(kSuite / "mock.json");
  REQUIRE(invoke({"run", "--manifest", p(kSuite / "manifest.jsonl"), "--out", p(dir / "run"), "--fixtures", mock})
              .code == kExitOk);
  std::vector<std::string> base{"score", "--transcripts", p(dir / "run" / "transcripts.jsonl"), "--manifest",
                                p(kSuite / "manifest.jsonl"), "--out", p(dir / "score")};
  auto live = base;
  live.insert(live.end(), {"--fixtures", mock});
  auto a = invoke(live);
  REQUIRE(a.code == kExitOk);
  auto offline = base;
  offline.push_back("--offline");
  auto b = invoke(offline);
  REQUIRE(b.code == kExitOk);
  CHECK(a.out == b.out);
  auto cold = base;
  cold[6] = p(dir / "elsewhere");
  cold.push_back("--offline");
  CHECK(invoke(cold).code == kExitScoreFailure);
}

TEST_CASE("ablate produces six rows with deltas against the first") {
  TempDir dir;
  AblateSpec spec;
  spec.manifest_path = kSuite / "manifest.jsonl";
  spec.backend.fixtures = kSuite / "mock.json";
  spec.backend.env = no_env();
  spec.output_dir = dir.path();
  std::ostringstream log;
  auto out = cmd_ablate(spec, log);
  REQUIRE(out.rows.size() == 6);
  CHECK(out.rows[0].name == "Action 5");
  CHECK(out.rows[5].name == "MERGED");
  CHECK(out.rows[0].delta_m_clip == 0.0);
  for (const auto& row : out.rows) {
    CHECK(row.delta_m_clip == doctest::Approx(row.report.avg_m_clip - out.rows[0].report.avg_m_clip));
    CHECK(row.delta_m_ram == doctest::Approx(row.report.avg_m_ram - out.rows[0].report.avg_m_ram));
  }
  CHECK(out.rows[2].report.avg_m_ram > out.rows[1].report.avg_m_ram);
  CHECK(fs::exists(dir / "ablation.json"));
  CHECK(fs::exists(dir / "actions_1_2_5" / "transcripts.jsonl"));
  CHECK(fs::exists(dir / "merged" / "transcripts.jsonl"));
}

TEST_CASE("time reports mean and population deviation") {
  CHECK(format_mean_std(60.0, 0.0) == "60 \xC2\xB1 0");
  CHECK(format_mean_std(12.4, 3.6) == "12 \xC2\xB1 4");
  TempDir dir;
  auto r = invoke({"time", "--manifest", p(kSuite / "manifest.jsonl"), "--fixtures", p(kSuite / "mock.json"), "--out",
                p(dir.path())});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("60 \xC2\xB1 0") != std::string::npos);
  CHECK(r.out.find("Baseline VQA") != std::string::npos);
  CHECK(fs::exists(dir / "timing.json"));
}

TEST_CASE("run over HTTP against the in-process fixture server") {
  BackendServer server(mock_from_fixtures(kChain / "mock.json"));
  server.start();
  TempDir dir;
  auto r = invoke({"run", "--manifest", p(kChain / "manifest.jsonl"), "--out", p(dir / "http"), "--chat-url",
                server.base_url(), "--no-cache"});
  REQUIRE(r.code == kExitOk);
  REQUIRE(invoke({"run", "--manifest", p(kChain / "manifest.jsonl"), "--out", p(dir / "mock"), "--fixtures",
               p(kChain / "mock.json"), "--no-cache"})
              .code == kExitOk);
  // Latency over HTTP is measured, so only content is compared.
  CHECK(content_only(read_transcripts(dir / "http" / "transcripts.jsonl")) ==
        content_only(read_transcripts(dir / "mock" / "transcripts.jsonl")));
  server.stop();
}

TEST_CASE("verify-splits and convert") {
  TempDir dir;
  CHECK(invoke({"verify-splits", "--manifest", p(kSuite / "manifest.jsonl"), "--expected", "3,3,2,2"}).code == kExitOk);
  auto r = invoke({"verify-splits", "--manifest", p(kSuite / "manifest.jsonl"), "--expected", "3,3,3,1"});
  CHECK(r.code == kExitCheckFailed);
  CHECK(r.err.find("split-2, split-3") != std::string::npos);
  CHECK(invoke({"verify-splits", "--manifest", p(kSuite / "manifest.jsonl"), "--dataset", "voc"}).code ==
        kExitCheckFailed);

  coa_test::write_file(dir / "img" / "1.jpg", "x");
  coa_test::write_file(dir / "ann.json", R"({"images": [{"id": 1, "file_name": "1.jpg"}],
    "categories": [{"id": 3, "name": "Cars"}], "annotations": [{"image_id": 1, "category_id": 3}]})");
  coa_test::write_file(dir / "split.jsonl", "{\"id\": 1, \"split\": 2}\n");
  r = invoke({"convert", "--annotations", p(dir / "ann.json"), "--images-dir", p(dir / "img"), "--split-spec",
           p(dir / "split.jsonl"), "--out", p(dir / "m.jsonl")});
  REQUIRE(r.code == kExitOk);
  auto m = load_manifest(dir / "m.jsonl");
  REQUIRE(m.entries.size() == 1);
  CHECK(m.entries[0].gold_labels.labels() == std::vector<std::string>{"car"});
  CHECK(m.entries[0].split.value() == 2);
}
