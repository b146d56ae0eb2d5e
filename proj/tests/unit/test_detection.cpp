#include <doctest.h>

#include <random>

#include "infragpt/detection.hpp"
#include "infragpt/errors.hpp"
#include "infragpt/metrics.hpp"
#include "scenario.hpp"

using namespace infragpt;
using namespace infragpt::detection;
using nlohmann::json;

namespace {

Detection det(BBox b, const std::string& cls, double conf, const std::string& model = "m") {
  return {b, cls, conf, model};
}

std::vector<std::string> ids(const std::vector<backends::DetectorBinding>& bs) {
  std::vector<std::string> out;
  for (const auto& b : bs) out.push_back(b.model_id);
  return out;
}

}  // namespace

TEST_CASE("select_detectors follows the decision flags") {
  const auto reg = scenario::registry();
  CHECK(select_detectors({}, reg).empty());
  CHECK(ids(select_detectors({true, false, false}, reg)) == std::vector<std::string>{"det-crack"});
  CHECK(ids(select_detectors({true, true, true}, reg)) ==
        std::vector<std::string>{"det-crack", "det-leak", "det-other"});
  CHECK(ids(select_detectors({false, true, true}, reg)) == std::vector<std::string>{"det-leak", "det-other"});

  auto shared = reg;
  shared.leak = shared.crack;
  CHECK(ids(select_detectors({true, true, false}, shared)) == std::vector<std::string>{"det-crack"});
}

TEST_CASE("registry parsing") {
  const json b = {{"model_id", "m"}, {"endpoint", "mock"}, {"classes", {"crack"}}};
  const auto reg = registry_from_json({{"routes", {{"crack", b}, {"leak", b}, {"other", b}}}, {"merge_iou", 0.4}});
  CHECK(reg.merge_iou == 0.4);
  CHECK(reg.class_registry() == std::vector<std::string>{"crack"});
  CHECK(scenario::registry().class_registry() == std::vector<std::string>{"crack", "leak", "pothole"});
  CHECK_THROWS_AS(registry_from_json({{"routes", {{"crack", b}, {"leak", b}}}}), Error);
  CHECK_THROWS_AS(registry_from_json({{"routes", {{"crack", b}, {"leak", b}, {"other", b}, {"rust", b}}}}), Error);
  CHECK_THROWS_AS(registry_from_json({{"routes", {{"crack", b}, {"leak", b}, {"other", b}}}, {"merge_iou", 0}}),
                  Error);
}

TEST_CASE("nms examples") {
  const DetectionSet dets = {det({0, 0, 10, 10}, "crack", 0.8), det({1, 0, 11, 10}, "crack", 0.9),
                             det({1, 0, 11, 10}, "leak", 0.7), det({50, 50, 60, 60}, "crack", 0.6)};
  const auto kept = nms(dets, 0.5);
  REQUIRE(kept.size() == 3);
  CHECK(kept[0].confidence == 0.9);
  CHECK(kept[1].class_label == "leak");
  CHECK(kept[2].bbox == BBox{50, 50, 60, 60});
  CHECK(nms({}, 0.5).empty());
}

TEST_CASE("nms properties") {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> c(0, 20), s(2, 10), conf(1, 9);
  const char* classes[] = {"crack", "leak"};
  for (int k = 0; k < 300; ++k) {
    DetectionSet dets;
    for (int i = static_cast<int>(rng() % 8); i > 0; --i) {
      const double x = c(rng), y = c(rng);
      dets.push_back(det({x, y, x + s(rng), y + s(rng)}, classes[rng() % 2], conf(rng) / 10.0));
    }
    const auto once = nms(dets, 0.5);
    CHECK(nms(once, 0.5) == once);
    CHECK(once.size() <= dets.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      for (std::size_t j = i + 1; j < once.size(); ++j) {
        if (once[i].class_label == once[j].class_label) CHECK(metrics::iou(once[i].bbox, once[j].bbox) < 0.5);
      }
    }
    DetectionSet shuffled = dets;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(nms(shuffled, 0.5) == once);
  }
}

TEST_CASE("run_detection merges bindings with cross-model NMS") {
  backends::ScriptedBackend s;
  const auto f = scenario::frame("f1");
  s.set("f1/detect/det-crack", scenario::detect_body({scenario::wire(50, 50, 20, 10, "crack", 0.9)}));
  s.set("f1/detect/det-other", scenario::detect_body({scenario::wire(51, 50, 20, 10, "crack", 0.7),
                                                      scenario::wire(200, 200, 30, 30, "pothole", 0.8)}));
  s.set("f1/detect/det-leak", json{{"$body", scenario::detect_body({}).dump()}, {"$latency_ms", 5}});
  const auto reg = scenario::registry();
  const auto run = run_detection(f, select_detectors({true, true, true}, reg), reg.merge_iou, s);
  REQUIRE(run.detections.size() == 2);
  CHECK(run.detections[0].model_id == "det-crack");
  CHECK(run.detections[1].class_label == "pothole");
  CHECK(run.latency_ms == 5);
  CHECK(s.call_count("f1", backends::CallKind::kDetect) == 3);

  CHECK_THROWS_AS(run_detection(f, {}, 0.5, s), Error);
  s.set("f2/detect", json{{"$error", "protocol"}});
  CHECK_THROWS_AS(run_detection(scenario::frame("f2"), select_detectors({true, true, false}, reg), 0.5, s,
                                backends::RetryPolicy::deterministic()),
                  Error);
}
