#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dohscope/characterize.hpp"

using namespace dohscope;
using namespace dohscope::analyze;
using dohscope::capture::Flow;

namespace {

Flow flow_of(std::uint64_t packets, std::uint64_t bytes, const char* group) {
  Flow f;
  f.packet_count = packets;
  f.payload_bytes = bytes;
  f.group = group;
  return f;
}

// Flows whose average payload approaches `asymptote` as packets grow: a
// constant handshake cost rides on top of per-packet payload.
std::vector<Flow> converging_flows(double asymptote, double handshake, std::mt19937& rng,
                                   const char* group, int count) {
  std::vector<Flow> flows;
  std::uniform_int_distribution<std::uint64_t> n_pick(1000, 10000);
  for (int i = 0; i < count; i++) {
    std::uint64_t n = n_pick(rng);
    Flow f = flow_of(n, std::uint64_t(asymptote * double(n) + handshake), group);
    flows.push_back(f);
  }
  return flows;
}

} // namespace

TEST_CASE("ratio point is the exact per-flow division") {
  auto pts = ratio_points({flow_of(1000, 2000, "g")});
  REQUIRE(pts.size() == 1);
  CHECK(pts[0].packet_count == 1000);
  CHECK(pts[0].avg_payload == 2.0);
  CHECK(pts[0].group == "g");
}

TEST_CASE("ratio points are a pure function of flows") {
  std::vector<Flow> flows = {flow_of(10, 100, "a"), flow_of(20, 4000, "b")};
  auto p1 = ratio_points(flows);
  auto p2 = ratio_points(flows);
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); i++) {
    CHECK(p1[i].packet_count == p2[i].packet_count);
    CHECK(p1[i].avg_payload == p2[i].avg_payload);
  }
}

TEST_CASE("curve tail converges to the constructed asymptote") {
  std::mt19937 rng(101);
  auto flows = converging_flows(120.0, 3000.0, rng, "h2-server", 40);
  auto curves = curve_summary(ratio_points(flows));
  REQUIRE(curves.size() == 1);
  REQUIRE(curves[0].tail_estimate.has_value());
  CHECK(*curves[0].tail_estimate == Catch::Approx(120.0).epsilon(0.05));
}

TEST_CASE("flows below the threshold give no tail estimate") {
  std::vector<Flow> flows;
  for (int i = 0; i < 30; i++) flows.push_back(flow_of(std::uint64_t(10 + i), 900, "short"));
  auto curves = curve_summary(ratio_points(flows));
  REQUIRE(curves.size() == 1);
  CHECK_FALSE(curves[0].tail_estimate.has_value());
  CHECK(curves[0].points.size() == 30); // points retained for plotting
}

TEST_CASE("fewer than five qualifying points is insufficient for a tail") {
  std::vector<Flow> flows;
  for (int i = 0; i < 4; i++) flows.push_back(flow_of(2000, 2000 * 100, "sparse"));
  auto curves = curve_summary(ratio_points(flows));
  CHECK_FALSE(curves[0].tail_estimate.has_value());
  flows.push_back(flow_of(2000, 2000 * 100, "sparse"));
  curves = curve_summary(ratio_points(flows));
  CHECK(curves[0].tail_estimate.has_value());
}

TEST_CASE("two generators with different asymptotes stay distinguishable") {
  std::mt19937 rng(202);
  auto a = converging_flows(120.0, 2500.0, rng, "a", 30);
  auto b = converging_flows(300.0, 2500.0, rng, "b", 30);
  a.insert(a.end(), b.begin(), b.end());
  auto curves = curve_summary(ratio_points(a));
  REQUIRE(curves.size() == 2);
  REQUIRE(curves[0].tail_estimate.has_value());
  REQUIRE(curves[1].tail_estimate.has_value());
  double lo = std::min(*curves[0].tail_estimate, *curves[1].tail_estimate);
  double hi = std::max(*curves[0].tail_estimate, *curves[1].tail_estimate);
  CHECK(lo < 130.0);
  CHECK(hi > 290.0);
}

TEST_CASE("region classifier basic decisions") {
  ClassifierModel m;
  m.max_avg_payload = 400.0;
  m.min_packet_count = 20;
  CHECK(classify_flow(500, 150.0, m).label == TrafficLabel::DoH);
  CHECK(classify_flow(4, 1200.0, m).label == TrafficLabel::NonDoH);
  CHECK(classify_flow(500, 401.0, m).label == TrafficLabel::NonDoH);
  CHECK(classify_flow(19, 150.0, m).label == TrafficLabel::NonDoH);
  auto c = classify_flow(500, 150.0, m);
  CHECK(c.score >= 0.0);
  CHECK(c.score <= 1.0);
}

TEST_CASE("degenerate model accepts everything") {
  ClassifierModel m;
  m.max_avg_payload = std::numeric_limits<double>::infinity();
  m.min_packet_count = 1;
  CHECK(classify_flow(1, 1e9, m).label == TrafficLabel::DoH);
  CHECK(classify_flow(100000, 0.0, m).label == TrafficLabel::DoH);
}

TEST_CASE("classifier is monotone in avg payload") {
  ClassifierModel m;
  m.max_avg_payload = 300.0;
  m.min_packet_count = 10;
  double prev_score = -1.0;
  bool was_doh = false;
  for (double avg = 1000.0; avg >= 1.0; avg -= 7.0) {
    auto c = classify_flow(50, avg, m);
    CHECK(c.score >= prev_score);
    if (was_doh) CHECK(c.label == TrafficLabel::DoH); // never flips back
    was_doh = c.label == TrafficLabel::DoH;
    prev_score = c.score;
  }
}

TEST_CASE("scaling payloads by k scales points and moves decisions one way") {
  std::vector<Flow> flows = {flow_of(100, 10000, "x")};
  auto base = ratio_points(flows)[0];
  auto scaled = ratio_points({flow_of(100, 30000, "x")})[0];
  CHECK(scaled.avg_payload == Catch::Approx(base.avg_payload * 3.0));
  CHECK(scaled.packet_count == base.packet_count);
  ClassifierModel m;
  m.max_avg_payload = 150.0;
  m.min_packet_count = 1;
  CHECK(classify_flow(base.packet_count, base.avg_payload, m).label == TrafficLabel::DoH);
  CHECK(classify_flow(scaled.packet_count, scaled.avg_payload, m).label == TrafficLabel::NonDoH);
}

TEST_CASE("fit on separable clouds reaches perfect training accuracy") {
  std::mt19937 rng(303);
  std::vector<LabeledPoint> pts;
  std::uniform_real_distribution<double> doh_payload(50.0, 250.0);
  std::uniform_real_distribution<double> bulk_payload(600.0, 1400.0);
  std::uniform_int_distribution<std::uint64_t> doh_packets(30, 5000);
  std::uniform_int_distribution<std::uint64_t> bulk_packets(10, 3000);
  for (int i = 0; i < 60; i++)
    pts.push_back({doh_packets(rng), doh_payload(rng), TrafficLabel::DoH});
  for (int i = 0; i < 60; i++)
    pts.push_back({bulk_packets(rng), bulk_payload(rng), TrafficLabel::NonDoH});
  auto model = fit_region(pts);
  CHECK(model.balanced_accuracy_train == 1.0);
  double max_doh = 0.0;
  for (const auto& p : pts)
    if (p.label == TrafficLabel::DoH) max_doh = std::max(max_doh, p.avg_payload);
  CHECK(model.max_avg_payload >= max_doh); // cut keeps every DoH point inside
  CHECK(model.max_avg_payload < 600.0);    // ... and every bulk point outside
}

TEST_CASE("identical clouds for both labels fit near chance") {
  std::mt19937 rng(404);
  std::vector<LabeledPoint> pts;
  std::uniform_real_distribution<double> payload(100.0, 200.0);
  for (int i = 0; i < 50; i++) {
    double p = payload(rng);
    std::uint64_t n = 10 + std::uint64_t(i);
    pts.push_back({n, p, TrafficLabel::DoH});
    pts.push_back({n, p, TrafficLabel::NonDoH});
  }
  auto model = fit_region(pts);
  CHECK(model.balanced_accuracy_train == Catch::Approx(0.5).margin(0.02));
}

TEST_CASE("fit is deterministic and rejects single-class input") {
  std::vector<LabeledPoint> pts = {
      {100, 120.0, TrafficLabel::DoH},    {300, 90.0, TrafficLabel::DoH},
      {50, 1000.0, TrafficLabel::NonDoH}, {20, 1400.0, TrafficLabel::NonDoH},
  };
  auto m1 = fit_region(pts);
  auto m2 = fit_region(pts);
  CHECK(m1.max_avg_payload == m2.max_avg_payload);
  CHECK(m1.min_packet_count == m2.min_packet_count);

  std::vector<LabeledPoint> only_doh = {{100, 120.0, TrafficLabel::DoH}};
  try {
    fit_region(only_doh);
    FAIL("expected SingleClassInput");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingleClassInput);
  }
}

TEST_CASE("model JSON roundtrip, including the unbounded payload form") {
  ClassifierModel m;
  m.max_avg_payload = 412.5;
  m.min_packet_count = 23;
  m.balanced_accuracy_train = 0.97;
  m.fitted_on = "fixture";
  auto back = model_from_json(model_to_json(m));
  CHECK(back.max_avg_payload == 412.5);
  CHECK(back.min_packet_count == 23);
  CHECK(back.fitted_on == "fixture");

  m.max_avg_payload = std::numeric_limits<double>::infinity();
  back = model_from_json(model_to_json(m));
  CHECK(std::isinf(back.max_avg_payload));
}

TEST_CASE("header overhead report bins and counts") {
  using Items = std::vector<std::pair<std::string, std::string>>;
  std::vector<std::pair<Items, std::uint64_t>> inventories;
  inventories.push_back({{{"content-type", "application/dns-message"},
                          {"content-length", "45"},
                          {"x-powered-by", "dns-server"}},
                         150});
  inventories.push_back({{{"content-type", "application/dns-message"},
                          {"content-length", "45"}},
                         180});
  inventories.push_back({{{"content-type", "application/dns-message"},
                          {"server", "nginx"}},
                         950});

  auto rep = header_overhead_report(inventories);
  CHECK(rep.histogram.at(100) == 2);
  CHECK(rep.histogram.at(900) == 1);
  CHECK(rep.name_frequency.at("content-type") == 3);
  CHECK(rep.name_frequency.at("x-powered-by") == 1);
  CHECK(rep.reports_total == 3);
  CHECK(rep.reports_with_required == 2); // the nginx one lacks content-length

  auto empty = header_overhead_report({});
  CHECK(empty.histogram.empty());
  CHECK(empty.name_frequency.empty());
}
