#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "infragpt/backends.hpp"
#include "infragpt/domain.hpp"

namespace infragpt::detection {

// Routes each screening flag to the detector that localizes it.
struct DetectorRegistry {
  backends::DetectorBinding crack;
  backends::DetectorBinding leak;
  backends::DetectorBinding other;
  double merge_iou = 0.5;

  /// Union of every binding's classes, sorted and deduplicated.
  std::vector<std::string> class_registry() const;
};

void check_registry(const DetectorRegistry& registry);

/// Parses {"routes": {"crack": binding, "leak": binding, "other": binding},
/// "merge_iou": x}.
DetectorRegistry registry_from_json(const nlohmann::json& j);

/// Bindings for each set flag in (crack, leak, other) order, deduplicated by
/// model_id. Empty for an all-zero decision.
std::vector<backends::DetectorBinding> select_detectors(const DecisionVector& decision,
                                                        const DetectorRegistry& registry);

/// Greedy per-class suppression. Detections are visited in the canonical
/// order; one is kept iff its IoU with every kept detection of its class is
/// strictly below the threshold. Output is in canonical order.
DetectionSet nms(DetectionSet dets, double iou_threshold);

struct DetectionRun {
  DetectionSet detections;
  std::int64_t latency_ms = 0;  // sum of backend-reported latencies
};

/// Runs every binding (concurrently when there are several), merges the
/// union with cross-model per-class NMS. Any backend failure propagates.
DetectionRun run_detection(const Frame& frame,
                           const std::vector<backends::DetectorBinding>& bindings,
                           double merge_iou, backends::DetectorBackend& backend,
                           const backends::RetryPolicy& retry = backends::RetryPolicy::live());

}  // namespace infragpt::detection
