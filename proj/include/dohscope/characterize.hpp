#pragma once

// The payload-size-to-packet-count fingerprint: per-flow ratio points,
// per-group convergence curves, and a two-threshold region classifier
// separating DoH-shaped flows from bulk HTTPS.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dohscope/errors.hpp"
#include "dohscope/flows.hpp"

namespace dohscope::analyze {

struct RatioPoint {
  std::uint64_t packet_count = 0;
  double avg_payload = 0.0;
  std::string group;
};

// One point per flow; exact division, no binning.
inline std::vector<RatioPoint> ratio_points(const std::vector<capture::Flow>& flows) {
  std::vector<RatioPoint> pts;
  pts.reserve(flows.size());
  for (const auto& f : flows) {
    if (f.packet_count == 0) continue;
    RatioPoint p;
    p.packet_count = f.packet_count;
    p.avg_payload = double(f.payload_bytes) / double(f.packet_count);
    p.group = f.group;
    pts.push_back(std::move(p));
  }
  return pts;
}

constexpr std::uint64_t kTailConvergenceThreshold = 1000;
constexpr std::size_t kMinTailPoints = 5;

struct CharacterizationCurve {
  std::string group;
  std::vector<RatioPoint> points; // sorted by packet_count
  std::optional<double> tail_estimate;
  std::uint64_t threshold = kTailConvergenceThreshold;
};

// Per-group curve with the long-flow tail estimate. Flows below the
// threshold stay in the curve for plotting but never enter the tail: the
// handshake is only amortized once flows get long.
inline std::vector<CharacterizationCurve> curve_summary(
    const std::vector<RatioPoint>& points, std::uint64_t threshold = kTailConvergenceThreshold) {
  std::map<std::string, CharacterizationCurve> by_group;
  for (const auto& p : points) {
    auto& c = by_group[p.group];
    c.group = p.group;
    c.threshold = threshold;
    c.points.push_back(p);
  }
  std::vector<CharacterizationCurve> out;
  for (auto& [g, c] : by_group) {
    std::sort(c.points.begin(), c.points.end(), [](const RatioPoint& a, const RatioPoint& b) {
      return std::tie(a.packet_count, a.avg_payload) < std::tie(b.packet_count, b.avg_payload);
    });
    double sum = 0;
    std::size_t n = 0;
    for (const auto& p : c.points) {
      if (p.packet_count >= threshold) {
        sum += p.avg_payload;
        n++;
      }
    }
    if (n >= kMinTailPoints) c.tail_estimate = sum / double(n);
    out.push_back(std::move(c));
  }
  return out;
}

struct ClassifierModel {
  double max_avg_payload = 0.0;    // DoH region: avg payload at or below this
  std::uint64_t min_packet_count = 1; // ... and at least this many packets
  double balanced_accuracy_train = 0.0;
  std::string fitted_on;

  bool valid() const { return max_avg_payload > 0.0 && min_packet_count >= 1; }
};

enum class TrafficLabel { DoH, NonDoH };

inline const char* traffic_label_name(TrafficLabel l) {
  return l == TrafficLabel::DoH ? "doh" : "non-doh";
}

struct Classification {
  TrafficLabel label = TrafficLabel::NonDoH;
  double score = 0.0; // confidence the flow is DoH, in [0,1]
};

// Region rule: DoH iff avg_payload <= max_avg_payload and packet_count >=
// min_packet_count. The score is a normalized signed margin to the region
// boundary, monotone in both features: at fixed packet count, a smaller
// average payload never lowers the score.
inline Classification classify_flow(std::uint64_t packet_count, double avg_payload,
                                    const ClassifierModel& m) {
  Classification c;
  bool in_region = avg_payload <= m.max_avg_payload &&
                   packet_count >= m.min_packet_count;
  c.label = in_region ? TrafficLabel::DoH : TrafficLabel::NonDoH;

  double payload_margin;
  if (std::isinf(m.max_avg_payload)) {
    payload_margin = 1.0;
  } else {
    payload_margin = (m.max_avg_payload - avg_payload) / m.max_avg_payload;
  }
  double count_margin =
      (double(packet_count) - double(m.min_packet_count)) / double(m.min_packet_count);
  double margin = std::min(payload_margin, count_margin);
  margin = std::clamp(margin, -1.0, 1.0);
  c.score = (margin + 1.0) / 2.0;
  return c;
}

inline Classification classify_flow(const capture::Flow& f, const ClassifierModel& m) {
  return classify_flow(f.packet_count, f.avg_payload(), m);
}

struct LabeledPoint {
  std::uint64_t packet_count = 0;
  double avg_payload = 0.0;
  TrafficLabel label = TrafficLabel::NonDoH;
};

namespace detail {

inline double balanced_accuracy(const std::vector<LabeledPoint>& pts, const ClassifierModel& m) {
  std::uint64_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (const auto& p : pts) {
    bool predicted_doh = classify_flow(p.packet_count, p.avg_payload, m).label == TrafficLabel::DoH;
    if (p.label == TrafficLabel::DoH) {
      predicted_doh ? tp++ : fn++;
    } else {
      predicted_doh ? fp++ : tn++;
    }
  }
  double tpr = tp + fn ? double(tp) / double(tp + fn) : 0.0;
  double tnr = tn + fp ? double(tn) / double(tn + fp) : 0.0;
  return (tpr + tnr) / 2.0;
}

} // namespace detail

// Grid search over thresholds drawn from the observed values, maximizing
// balanced accuracy. Ties break toward the smallest payload threshold,
// then the smallest packet-count threshold, so identical input always
// yields the identical model.
inline ClassifierModel fit_region(const std::vector<LabeledPoint>& pts) {
  bool has_doh = false, has_other = false;
  for (const auto& p : pts) {
    (p.label == TrafficLabel::DoH ? has_doh : has_other) = true;
  }
  if (!has_doh || !has_other)
    throw Error(ErrorKind::SingleClassInput, "fitting needs both DoH and non-DoH samples");

  // Candidate cuts come from the observed values of each class separately:
  // quantile thinning keeps the search bounded on large inputs while always
  // retaining per-class extremes, where the optimal cut of a separable
  // sample sits.
  auto sorted_unique_thinned = [](auto v) {
    constexpr std::size_t kMaxPerClass = 48;
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    if (v.size() <= kMaxPerClass) return v;
    std::decay_t<decltype(v)> kept;
    for (std::size_t i = 0; i < kMaxPerClass; i++) {
      kept.push_back(v[i * (v.size() - 1) / (kMaxPerClass - 1)]);
    }
    kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
    return kept;
  };

  std::vector<double> doh_payloads, other_payloads;
  std::vector<std::uint64_t> doh_counts, other_counts;
  for (const auto& p : pts) {
    if (p.label == TrafficLabel::DoH) {
      doh_payloads.push_back(p.avg_payload);
      if (p.packet_count > 0) doh_counts.push_back(p.packet_count);
    } else {
      other_payloads.push_back(p.avg_payload);
      if (p.packet_count > 0) other_counts.push_back(p.packet_count);
    }
  }
  std::vector<double> payload_candidates = sorted_unique_thinned(std::move(doh_payloads));
  for (double v : sorted_unique_thinned(std::move(other_payloads))) payload_candidates.push_back(v);
  std::vector<std::uint64_t> count_candidates{1};
  for (auto v : sorted_unique_thinned(std::move(doh_counts))) count_candidates.push_back(v);
  for (auto v : sorted_unique_thinned(std::move(other_counts))) count_candidates.push_back(v);
  std::sort(payload_candidates.begin(), payload_candidates.end());
  payload_candidates.erase(std::unique(payload_candidates.begin(), payload_candidates.end()),
                           payload_candidates.end());
  std::sort(count_candidates.begin(), count_candidates.end());
  count_candidates.erase(std::unique(count_candidates.begin(), count_candidates.end()),
                         count_candidates.end());

  ClassifierModel best;
  double best_score = -1.0;
  for (double payload_cut : payload_candidates) {
    if (payload_cut <= 0.0) continue;
    for (std::uint64_t count_cut : count_candidates) {
      ClassifierModel m;
      m.max_avg_payload = payload_cut;
      m.min_packet_count = count_cut;
      double score = detail::balanced_accuracy(pts, m);
      if (score > best_score) {
        best_score = score;
        best = m;
      }
    }
  }
  best.balanced_accuracy_train = best_score;
  return best;
}

// --- header inventory reporting ---------------------------------------------

struct HeaderOverheadReport {
  std::map<std::uint64_t, std::uint64_t> histogram; // bin lower bound -> count
  std::uint64_t bin_width = 100;
  std::map<std::string, std::uint64_t> name_frequency;
  std::uint64_t reports_total = 0;
  std::uint64_t reports_with_required = 0; // content-type and content-length present
};

// Histogram of response-header block sizes plus per-name frequency over a
// set of header inventories (one per probed server).
inline HeaderOverheadReport header_overhead_report(
    const std::vector<std::pair<std::vector<std::pair<std::string, std::string>>, std::uint64_t>>&
        inventories,
    std::uint64_t bin_width = 100) {
  if (bin_width == 0) throw Error(ErrorKind::ConfigError, "bin width must be positive");
  HeaderOverheadReport rep;
  rep.bin_width = bin_width;
  for (const auto& [items, header_bytes] : inventories) {
    rep.reports_total++;
    rep.histogram[header_bytes / bin_width * bin_width]++;
    bool has_type = false, has_length = false;
    for (const auto& [name, value] : items) {
      (void)value;
      rep.name_frequency[name]++;
      if (name == "content-type") has_type = true;
      if (name == "content-length") has_length = true;
    }
    if (has_type && has_length) rep.reports_with_required++;
  }
  return rep;
}

// --- model persistence -------------------------------------------------------

inline constexpr const char* kModelSchema = "dohscope.model.v1";

inline nlohmann::json model_to_json(const ClassifierModel& m) {
  nlohmann::json j;
  j["schema"] = kModelSchema;
  if (std::isinf(m.max_avg_payload)) {
    j["max_avg_payload"] = nullptr; // unbounded
  } else {
    j["max_avg_payload"] = m.max_avg_payload;
  }
  j["min_packet_count"] = m.min_packet_count;
  j["balanced_accuracy_train"] = m.balanced_accuracy_train;
  if (!m.fitted_on.empty()) j["fitted_on"] = m.fitted_on;
  return j;
}

inline ClassifierModel model_from_json(const nlohmann::json& j) {
  ClassifierModel m;
  if (j.contains("max_avg_payload") && !j["max_avg_payload"].is_null()) {
    m.max_avg_payload = j["max_avg_payload"].get<double>();
  } else {
    m.max_avg_payload = std::numeric_limits<double>::infinity();
  }
  m.min_packet_count = j.value("min_packet_count", 1ull);
  m.balanced_accuracy_train = j.value("balanced_accuracy_train", 0.0);
  m.fitted_on = j.value("fitted_on", "");
  return m;
}

} // namespace dohscope::analyze
