// Serial reference vs OpenMP batch kernels over a sleeping mock, so the
// numbers reflect overlap of backend waits rather than CPU work.
//
//   ./bench_batch --benchmark_min_time=0.1

#include <benchmark/benchmark.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "coa/chain.hpp"
#include "coa/metrics.hpp"

using namespace coa;
namespace fs = std::filesystem;

namespace {

constexpr int kImages = 32;

struct Workload {
  fs::path dir;
  std::vector<ImageRecord> records;
  std::shared_ptr<MockBackend> mock;
  std::vector<ScoreItem> items;

  Workload() {
    dir = fs::temp_directory_path() / ("coa_bench_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    nlohmann::json fx;
    fx["latency_ms"] = 2;
    fx["chat"] = nlohmann::json::array({
        {{"image", "*"}, {"action", "caption"}, {"response", "A dog and a cat on the grass."}},
        {{"image", "*"}, {"action", "self_correct"}, {"subject", "*"}, {"response", "Yes"}},
        {{"image", "*"}, {"action", "appearance"}, {"response", "dog: brown\ncat: white"}},
        {{"image", "*"}, {"action", "relationship"}, {"response", "The dog watches the cat."}},
        {{"image", "*"}, {"action", "final"}, {"response", "dog, cat, grass"}},
    });
    fx["embed_text"] = {{"This image contains dog, cat, grass", {1.0, 0.5, 0.2}},
                        {"This image contains dog", {1.0, 0.0, 0.0}}};
    fx["tag"] = {{"*", {{"dog", 0.9}, {"cat", 0.8}, {"grass", 0.5}}}};
    for (int i = 0; i < kImages; ++i) {
      const std::string id = "img" + std::to_string(i);
      std::ofstream(dir / (id + ".jpg"), std::ios::binary) << "bench image " << i;
      fx["images"][id] = id + ".jpg";
      fx["embed_image"][id] = {1.0, 0.1 * (i % 7), 0.3};
      ImageRecord r;
      r.id = id;
      r.image_ref = (dir / (id + ".jpg")).string();
      r.gold_labels = labelset_from({"dog"});
      r.split = SplitId(i % 4);
      records.push_back(r);
      items.push_back({r, labelset_from({"dog", "cat", "grass"}), 0});
    }
    std::ofstream(dir / "mock.json") << fx.dump();
    mock = mock_from_fixtures(dir / "mock.json", MockOptions{.sleep_for_latency = true});
  }
  ~Workload() { fs::remove_all(dir); }
};

Workload& workload() {
  static Workload w;
  return w;
}

void BM_run_batch_serial(benchmark::State& state) {
  auto& w = workload();
  auto cfg = ChainConfig::with_actions({1, 2, 3, 4, 5});
  for (auto _ : state) benchmark::DoNotOptimize(run_batch_serial(w.records, cfg, *w.mock));
  state.SetItemsProcessed(state.iterations() * kImages);
}

void BM_run_batch(benchmark::State& state) {
  auto& w = workload();
  auto cfg = ChainConfig::with_actions({1, 2, 3, 4, 5});
  cfg.parallelism = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_batch(w.records, cfg, *w.mock));
  state.SetItemsProcessed(state.iterations() * kImages);
}

void BM_score_batch_serial(benchmark::State& state) {
  auto& w = workload();
  for (auto _ : state) benchmark::DoNotOptimize(score_batch_serial(w.items, *w.mock, MetricConfig{}));
  state.SetItemsProcessed(state.iterations() * kImages);
}

void BM_score_batch(benchmark::State& state) {
  auto& w = workload();
  ScoreOptions opts;
  opts.parallelism = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(score_batch(w.items, *w.mock, MetricConfig{}, opts));
  state.SetItemsProcessed(state.iterations() * kImages);
}

}  // namespace

BENCHMARK(BM_run_batch_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_run_batch)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_score_batch_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_score_batch)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
