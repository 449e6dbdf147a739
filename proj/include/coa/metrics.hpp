#pragma once

// Comprehensiveness (CS / M_clip) and accuracy (AS / M_ram) scoring, the
// tagger-confidence post-filter, and per-split aggregation.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coa/backends.hpp"
#include "coa/domain.hpp"

namespace coa {

enum class EmptyPredictionPolicy { ScoreHalf, ScoreZero };
enum class AvgMode { MeanOverSplits, MeanOverImages };

struct MetricConfig {
  double sigma = 0.73;
  std::string com_prompt_prefix = "This image contains ";
  bool strict_inequality = true;  // fixed; kept visible in reports
  EmptyPredictionPolicy empty_policy = EmptyPredictionPolicy::ScoreHalf;
  AvgMode avg_mode = AvgMode::MeanOverSplits;
  std::string embed_model = "clip-vit-b-32";
  std::string tag_model = "ram";

  // Throws ConfigError.
  void validate() const;
};

double logistic(double x) noexcept;

// prefix + "dog, ball"; prefix + "nothing" for the empty set.
std::string render_com_prompt(const LabelSet& labels, const MetricConfig& cfg);

// Cosine of the L2-normalized vectors, in double. Throws MetricError on a
// zero vector or a length mismatch.
double cosine(std::span<const double> a, std::span<const double> b);

// 1 iff cos(pred, image) > cos(gold, image). Equality scores 0.
int cs_from_embeddings(std::span<const double> pred, std::span<const double> gold, std::span<const double> image);

// logistic(sum of +1 for conf >= sigma, -1 otherwise). An empty list
// follows the policy: 0.5 or 0.
double as_from_confidences(std::span<const double> confidences, double sigma,
                           EmptyPredictionPolicy policy = EmptyPredictionPolicy::ScoreHalf);

// Labels whose confidence is >= sigma, in their original order.
LabelSet ram_filter_from_confidences(const LabelSet& pred, std::span<const double> confidences, double sigma);

// Backend-driven forms. The guard, when given, checks embedding widths
// stay the same for the whole run (ConfigError otherwise).
int cs_score(const LabelSet& pred, const LabelSet& gold, const ImageHandle& image, ModelBackend& embedder,
             const MetricConfig& cfg, DimensionGuard* guard = nullptr);
double as_score(const LabelSet& pred, const ImageHandle& image, ModelBackend& tagger, const MetricConfig& cfg);
LabelSet ram_filter(const LabelSet& pred, const ImageHandle& image, ModelBackend& tagger, const MetricConfig& cfg);

// One image to score: its manifest record, the predicted labels and the
// chain latency that produced them.
struct ScoreItem {
  ImageRecord record;
  LabelSet prediction;
  std::int64_t latency_ms = 0;
};

struct ScoredImage {
  std::string image_id;
  int split = 0;
  ImageScore score;
  std::int64_t latency_ms = 0;
};

struct ScoreError {
  std::string image_id;
  std::string message;
};

struct ScoreBatch {
  std::vector<ScoredImage> scored;  // input order
  std::vector<ScoreError> errors;
};

struct ScoreOptions {
  bool ram_filter = false;
  int parallelism = 1;
};

// Scores one image. Per-image problems (unreadable image, zero vector,
// malformed tagger output, missing fixture) come back as ScoreError;
// ConfigError propagates.
ScoredImage score_image(const ScoreItem& item, ModelBackend& backend, const MetricConfig& cfg,
                        const ScoreOptions& opts, DimensionGuard& guard);

// Reference implementation: one image after another.
ScoreBatch score_batch_serial(std::span<const ScoreItem> items, ModelBackend& backend, const MetricConfig& cfg,
                              const ScoreOptions& opts = {});
// Up to opts.parallelism images at once (OpenMP). Same output as serial.
ScoreBatch score_batch(std::span<const ScoreItem> items, ModelBackend& backend, const MetricConfig& cfg,
                       const ScoreOptions& opts = {});

// Per-split means and latency statistics (population stddev), plus the
// Avg column per cfg.avg_mode. Splits with no scored image are omitted
// and noted in report.warnings.
MetricReport aggregate(std::span<const ScoredImage> scored, const MetricConfig& cfg, int n_metric_errors = 0,
                       std::string config_fingerprint = {});

double mean_over_splits(const std::vector<double>& split_values);

}  // namespace coa
