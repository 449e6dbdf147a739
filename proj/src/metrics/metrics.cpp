#include "coa/metrics.hpp"

#include <cmath>
#include <exception>
#include <map>
#include <optional>

#include <omp.h>

#include "coa/errors.hpp"

namespace coa {

void MetricConfig::validate() const {
  if (!(sigma > 0.0 && sigma < 1.0)) throw ConfigError("sigma must lie in (0,1)");
  if (!strict_inequality) throw ConfigError("the CS comparison is always strict");
  if (embed_model.empty() || tag_model.empty()) throw ConfigError("embed_model and tag_model must be set");
}

double logistic(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

std::string render_com_prompt(const LabelSet& labels, const MetricConfig& cfg) {
  return cfg.com_prompt_prefix + (labels.empty() ? std::string("nothing") : labels.join(", "));
}

namespace {

double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw MetricError("embedding length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0 || !std::isfinite(na) || !std::isfinite(nb)) {
    throw MetricError("zero or non-finite embedding vector");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += (a[i] / na) * (b[i] / nb);
  return dot;
}

int cs_from_embeddings(std::span<const double> pred, std::span<const double> gold, std::span<const double> image) {
  return cosine(pred, image) > cosine(gold, image) ? 1 : 0;
}

double as_from_confidences(std::span<const double> confidences, double sigma, EmptyPredictionPolicy policy) {
  if (confidences.empty()) return policy == EmptyPredictionPolicy::ScoreHalf ? 0.5 : 0.0;
  int sum = 0;
  for (double c : confidences) sum += c >= sigma ? 1 : -1;
  return logistic(sum);
}

LabelSet ram_filter_from_confidences(const LabelSet& pred, std::span<const double> confidences, double sigma) {
  if (confidences.size() != pred.size()) throw MetricError("tagger returned a confidence list of the wrong length");
  std::vector<std::string> kept;
  std::vector<double> kept_conf;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (confidences[i] >= sigma) {
      kept.push_back(pred[i]);
      kept_conf.push_back(confidences[i]);
    }
  }
  return LabelSet::from_normalized(std::move(kept)).with_confidences(std::move(kept_conf));
}

namespace {

std::vector<double> embed_text(ModelBackend& backend, const MetricConfig& cfg, std::string text,
                               DimensionGuard* guard) {
  EmbedRequest req;
  req.model = cfg.embed_model;
  req.kind = EmbedKind::Text;
  req.text = std::move(text);
  auto resp = backend.embed(req);
  if (guard) guard->check(EmbedKind::Text, resp.dim);
  return std::move(resp.vector);
}

std::vector<double> embed_image(ModelBackend& backend, const MetricConfig& cfg, const ImageHandle& image,
                                DimensionGuard* guard) {
  EmbedRequest req;
  req.model = cfg.embed_model;
  req.kind = EmbedKind::Image;
  req.image = image;
  auto resp = backend.embed(req);
  if (guard) guard->check(EmbedKind::Image, resp.dim);
  return std::move(resp.vector);
}

std::vector<double> tag_confidences(const LabelSet& pred, const ImageHandle& image, ModelBackend& tagger,
                                    const MetricConfig& cfg) {
  if (pred.empty()) return {};
  TagRequest req;
  req.model = cfg.tag_model;
  req.image = image;
  req.labels = pred.labels();
  return tagger.tag(req).confidences;
}

}  // namespace

int cs_score(const LabelSet& pred, const LabelSet& gold, const ImageHandle& image, ModelBackend& embedder,
             const MetricConfig& cfg, DimensionGuard* guard) {
  auto t_pred = embed_text(embedder, cfg, render_com_prompt(pred, cfg), guard);
  auto t_gold = embed_text(embedder, cfg, render_com_prompt(gold, cfg), guard);
  auto v = embed_image(embedder, cfg, image, guard);
  return cs_from_embeddings(t_pred, t_gold, v);
}

double as_score(const LabelSet& pred, const ImageHandle& image, ModelBackend& tagger, const MetricConfig& cfg) {
  auto conf = tag_confidences(pred, image, tagger, cfg);
  return as_from_confidences(conf, cfg.sigma, cfg.empty_policy);
}

LabelSet ram_filter(const LabelSet& pred, const ImageHandle& image, ModelBackend& tagger, const MetricConfig& cfg) {
  if (pred.empty()) return pred;
  return ram_filter_from_confidences(pred, tag_confidences(pred, image, tagger, cfg), cfg.sigma);
}

ScoredImage score_image(const ScoreItem& item, ModelBackend& backend, const MetricConfig& cfg,
                        const ScoreOptions& opts, DimensionGuard& guard) {
  ImageHandle image = ImagePayload::from_file(item.record.image_ref);

  LabelSet pred = item.prediction;
  std::vector<double> conf = tag_confidences(pred, image, backend, cfg);
  if (opts.ram_filter) {
    pred = ram_filter_from_confidences(pred, conf, cfg.sigma);
    conf = *pred.confidences();
  }

  ScoredImage out;
  out.image_id = item.record.id;
  out.split = item.record.split.value();
  out.latency_ms = item.latency_ms;
  out.score.n_predicted = static_cast<int>(pred.size());
  out.score.as = as_from_confidences(conf, cfg.sigma, cfg.empty_policy);
  out.score.cs = cs_score(pred, item.record.gold_labels, image, backend, cfg, &guard);
  return out;
}

namespace {

struct Slot {
  std::optional<ScoredImage> scored;
  std::optional<ScoreError> error;
};

Slot score_slot(const ScoreItem& item, ModelBackend& backend, const MetricConfig& cfg, const ScoreOptions& opts,
                DimensionGuard& guard) {
  Slot slot;
  try {
    slot.scored = score_image(item, backend, cfg, opts, guard);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    slot.error = ScoreError{item.record.id, e.what()};
  }
  return slot;
}

ScoreBatch collect(std::vector<Slot>&& slots) {
  ScoreBatch out;
  for (auto& s : slots) {
    if (s.scored) out.scored.push_back(std::move(*s.scored));
    if (s.error) out.errors.push_back(std::move(*s.error));
  }
  return out;
}

}  // namespace

ScoreBatch score_batch_serial(std::span<const ScoreItem> items, ModelBackend& backend, const MetricConfig& cfg,
                              const ScoreOptions& opts) {
  cfg.validate();
  DimensionGuard guard;
  std::vector<Slot> slots;
  slots.reserve(items.size());
  for (const auto& item : items) slots.push_back(score_slot(item, backend, cfg, opts, guard));
  return collect(std::move(slots));
}

ScoreBatch score_batch(std::span<const ScoreItem> items, ModelBackend& backend, const MetricConfig& cfg,
                       const ScoreOptions& opts) {
  cfg.validate();
  if (opts.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  DimensionGuard guard;
  std::vector<Slot> slots(items.size());
  std::exception_ptr fatal;
  const long n = static_cast<long>(items.size());

#pragma omp parallel for schedule(dynamic, 1) num_threads(opts.parallelism)
  for (long i = 0; i < n; ++i) {
    try {
      slots[i] = score_slot(items[i], backend, cfg, opts, guard);
    } catch (...) {
#pragma omp critical(coa_score_fatal)
      if (!fatal) fatal = std::current_exception();
    }
  }
  if (fatal) std::rethrow_exception(fatal);
  return collect(std::move(slots));
}

double mean_over_splits(const std::vector<double>& split_values) {
  if (split_values.empty()) throw MetricError("no splits to average");
  double sum = 0.0;
  for (double v : split_values) sum += v;
  return sum / static_cast<double>(split_values.size());
}

MetricReport aggregate(std::span<const ScoredImage> scored, const MetricConfig& cfg, int n_metric_errors,
                       std::string config_fingerprint) {
  MetricReport report;
  report.n_metric_errors = n_metric_errors;
  report.config_fingerprint = std::move(config_fingerprint);

  struct Acc {
    long n = 0;
    long cs = 0;
    double as = 0.0;
    double lat = 0.0;
  };
  std::map<int, Acc> acc;
  for (const auto& s : scored) {
    if (!SplitId::valid(s.split)) throw InputError("image '" + s.image_id + "' has no valid split");
    if (!report.per_image.emplace(s.image_id, s.score).second) {
      throw InputError("image '" + s.image_id + "' scored twice");
    }
    auto& a = acc[s.split];
    ++a.n;
    a.cs += s.score.cs;
    a.as += s.score.as;
    a.lat += static_cast<double>(s.latency_ms);
  }
  for (auto& [split, a] : acc) {
    SplitScore ss;
    ss.n_images = static_cast<int>(a.n);
    ss.m_clip = static_cast<double>(a.cs) / static_cast<double>(a.n);
    ss.m_ram = a.as / static_cast<double>(a.n);
    ss.mean_latency_ms = a.lat / static_cast<double>(a.n);
    report.per_split[split] = ss;
  }
  // Second pass for the deviation so it does not suffer from cancellation.
  std::map<int, double> sq;
  for (const auto& s : scored) {
    double d = static_cast<double>(s.latency_ms) - report.per_split[s.split].mean_latency_ms;
    sq[s.split] += d * d;
  }
  for (auto& [split, ss] : report.per_split) ss.latency_stddev_ms = std::sqrt(sq[split] / ss.n_images);

  for (int split = 0; split < SplitId::kCount; ++split) {
    if (!report.per_split.count(split)) {
      report.warnings.push_back("split " + std::to_string(split) + " has no scored images; omitted");
    }
  }
  if (report.per_split.empty()) return report;

  if (cfg.avg_mode == AvgMode::MeanOverSplits) {
    std::vector<double> clip, ram;
    for (const auto& [split, ss] : report.per_split) {
      clip.push_back(ss.m_clip);
      ram.push_back(ss.m_ram);
    }
    report.avg_m_clip = mean_over_splits(clip);
    report.avg_m_ram = mean_over_splits(ram);
  } else {
    double cs = 0.0, as = 0.0;
    for (const auto& s : scored) {
      cs += s.score.cs;
      as += s.score.as;
    }
    report.avg_m_clip = cs / static_cast<double>(scored.size());
    report.avg_m_ram = as / static_cast<double>(scored.size());
  }
  return report;
}

}  // namespace coa
