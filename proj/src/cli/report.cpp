#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "coa/cli.hpp"

namespace coa::cli {

using json = nlohmann::json;

std::string format_mean_std(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.0f ± %.0f", mean, stddev);
  return buf;
}

namespace {

std::string pct(double v, bool signed_value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, signed_value ? "%+.2f" : "%.2f", v * 100.0);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  // Width counts bytes; the table only ever holds ASCII.
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string format_metric_table(const std::vector<TableRow>& rows, const MetricReport* baseline) {
  std::size_t name_w = 8;
  for (const auto& r : rows) name_w = std::max(name_w, r.name.size() + 2);
  constexpr std::size_t kCell = 9;

  std::ostringstream os;
  std::string head1 = pad("Method", name_w);
  std::string head2 = pad("", name_w);
  for (int s = 0; s < SplitId::kCount; ++s) {
    head1 += pad("Split-" + std::to_string(s), 2 * kCell);
    head2 += pad("M_clip", kCell) + pad("M_ram", kCell);
  }
  head1 += "Avg";
  head2 += pad("M_clip", kCell) + "M_ram";
  os << head1 << '\n' << head2 << '\n';

  const bool delta = baseline != nullptr;
  for (const auto& r : rows) {
    std::string line = pad(r.name, name_w);
    for (int s = 0; s < SplitId::kCount; ++s) {
      auto it = r.report->per_split.find(s);
      std::optional<SplitScore> base;
      if (delta) {
        auto b = baseline->per_split.find(s);
        if (b != baseline->per_split.end()) base = b->second;
      }
      if (it == r.report->per_split.end() || (delta && !base)) {
        line += pad("-", kCell) + pad("-", kCell);
        continue;
      }
      double clip = it->second.m_clip - (base ? base->m_clip : 0.0);
      double ram = it->second.m_ram - (base ? base->m_ram : 0.0);
      line += pad(pct(clip, delta), kCell) + pad(pct(ram, delta), kCell);
    }
    if (r.report->per_split.empty()) {
      line += pad("-", kCell) + "-";
    } else {
      double clip = r.report->avg_m_clip - (delta ? baseline->avg_m_clip : 0.0);
      double ram = r.report->avg_m_ram - (delta ? baseline->avg_m_ram : 0.0);
      line += pad(pct(clip, delta), kCell) + pct(ram, delta);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << '\n';
  }
  return os.str();
}

namespace {

json report_body(const MetricReport& r, const std::vector<ScoreError>& errors) {
  json j;
  j["avg"] = {{"m_clip", r.avg_m_clip}, {"m_ram", r.avg_m_ram}};
  j["config_fingerprint"] = r.config_fingerprint;
  j["n_metric_errors"] = r.n_metric_errors;
  json errs = json::array();
  for (const auto& e : errors) errs.push_back({{"image_id", e.image_id}, {"message", e.message}});
  j["metric_errors"] = errs;
  json per_image = json::object();
  for (const auto& [id, s] : r.per_image) {
    per_image[id] = {{"cs", s.cs}, {"as", s.as}, {"n_predicted", s.n_predicted}};
  }
  j["per_image"] = per_image;
  json per_split = json::object();
  for (const auto& [split, s] : r.per_split) {
    per_split[std::to_string(split)] = {{"m_clip", s.m_clip},
                                        {"m_ram", s.m_ram},
                                        {"n_images", s.n_images},
                                        {"mean_latency_ms", s.mean_latency_ms},
                                        {"latency_stddev_ms", s.latency_stddev_ms}};
  }
  j["per_split"] = per_split;
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace

std::string report_json(const ScoreOutcome& outcome, const MetricConfig& cfg) {
  json j = report_body(outcome.report, outcome.errors);
  j["coverage"] = {{"scored", outcome.coverage.scored}, {"total", outcome.coverage.total}};
  j["missing_ids"] = outcome.missing_ids;
  j["metric_config"] = {
      {"sigma", cfg.sigma},
      {"com_prompt_prefix", cfg.com_prompt_prefix},
      {"strict_inequality", cfg.strict_inequality},
      {"empty_prediction_policy", cfg.empty_policy == EmptyPredictionPolicy::ScoreHalf ? "score_half" : "score_zero"},
      {"avg_mode", cfg.avg_mode == AvgMode::MeanOverSplits ? "splits" : "images"},
      {"embed_model", cfg.embed_model},
      {"tag_model", cfg.tag_model},
  };
  if (outcome.filtered) j["with_filter"] = report_body(*outcome.filtered, outcome.filtered_errors);
  return j.dump(2) + "\n";
}

}  // namespace coa::cli
