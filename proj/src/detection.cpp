#include "infragpt/detection.hpp"

#include <algorithm>
#include <future>
#include <set>

#include "infragpt/errors.hpp"
#include "infragpt/metrics.hpp"

namespace infragpt::detection {

std::vector<std::string> DetectorRegistry::class_registry() const {
  std::set<std::string> classes;
  for (const auto* b : {&crack, &leak, &other}) classes.insert(b->classes.begin(), b->classes.end());
  return {classes.begin(), classes.end()};
}

void check_registry(const DetectorRegistry& registry) {
  backends::check_binding(registry.crack);
  backends::check_binding(registry.leak);
  backends::check_binding(registry.other);
  if (!(registry.merge_iou > 0.0 && registry.merge_iou <= 1.0)) {
    throw Error(ErrorCode::kConfig, "merge_iou must lie in (0, 1]");
  }
}

DetectorRegistry registry_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("routes") || !j.at("routes").is_object()) {
    throw Error(ErrorCode::kConfig, "detectors.routes must be an object");
  }
  const auto& routes = j.at("routes");
  for (const auto& [key, _] : routes.items()) {
    if (key != "crack" && key != "leak" && key != "other") {
      throw Error(ErrorCode::kConfig, "unknown detector route '" + key + "'");
    }
  }
  auto route = [&](const char* flag) {
    if (!routes.contains(flag)) {
      throw Error(ErrorCode::kConfig, std::string("detector route '") + flag + "' is missing");
    }
    return backends::binding_from_json(routes.at(flag));
  };
  DetectorRegistry registry{route("crack"), route("leak"), route("other"),
                            j.value("merge_iou", 0.5)};
  check_registry(registry);
  return registry;
}

std::vector<backends::DetectorBinding> select_detectors(const DecisionVector& decision,
                                                        const DetectorRegistry& registry) {
  std::vector<backends::DetectorBinding> out;
  auto add = [&](bool flag, const backends::DetectorBinding& b) {
    if (!flag) return;
    const bool seen = std::any_of(out.begin(), out.end(),
                                  [&](const auto& x) { return x.model_id == b.model_id; });
    if (!seen) out.push_back(b);
  };
  add(decision.crack, registry.crack);
  add(decision.leak, registry.leak);
  add(decision.other, registry.other);
  return out;
}

DetectionSet nms(DetectionSet dets, double iou_threshold) {
  sort_detections(dets);
  DetectionSet kept;
  for (auto& d : dets) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_label == d.class_label && metrics::iou(k.bbox, d.bbox) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(std::move(d));
  }
  return kept;
}

DetectionRun run_detection(const Frame& frame,
                           const std::vector<backends::DetectorBinding>& bindings,
                           double merge_iou, backends::DetectorBackend& backend,
                           const backends::RetryPolicy& retry) {
  if (bindings.empty()) {
    throw Error(ErrorCode::kPrecondition, "run_detection needs at least one detector binding");
  }
  struct PerBinding {
    DetectionSet dets;
    std::int64_t latency = 0;
  };
  auto run_one = [&](const backends::DetectorBinding& b) {
    PerBinding r;
    r.dets = backends::detect(frame, b, backend, retry, &r.latency);
    return r;
  };

  std::vector<PerBinding> results;
  if (bindings.size() == 1) {
    results.push_back(run_one(bindings.front()));
  } else {
    std::vector<std::future<PerBinding>> futures;
    for (const auto& b : bindings) futures.push_back(std::async(std::launch::async, run_one, b));
    for (auto& f : futures) results.push_back(f.get());
  }

  DetectionRun run;
  DetectionSet merged;
  for (auto& r : results) {
    run.latency_ms += r.latency;
    merged.insert(merged.end(), r.dets.begin(), r.dets.end());
  }
  run.detections = nms(std::move(merged), merge_iou);
  return run;
}

}  // namespace infragpt::detection
