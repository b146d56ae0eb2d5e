#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "infragpt/domain.hpp"

namespace infragpt::schema {

struct Violation {
  std::string path;     // JSONPath-style, e.g. "$.items[0].bbox"
  std::string rule;     // e.g. "required-field", "corner-ordering"
  std::string message;

  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  bool syntactic_ok = false;
  std::vector<Violation> violations;
  // Unknown item-level fields; reported but never fatal.
  std::vector<Violation> warnings;

  bool valid() const { return syntactic_ok && violations.empty(); }

  /// One "path: rule: message" line per violation.
  std::string describe() const;
};

ordered_json to_json(const ValidationReport& report);

struct ValidationOptions {
  // Reject an empty items array (plans that accompany detections).
  bool require_items = false;
};

/// Total over arbitrary byte strings: every failure becomes a report entry.
ValidationReport validate_plan(std::string_view document, const Frame& frame,
                               ValidationOptions options = {});

/// Parses a document that validate_plan accepted. Throws kContract otherwise.
MaintenancePlan parse_plan(std::string_view document, const Frame& frame);

/// Canonical schema document for a plan. Throws kContract if the plan
/// breaks a frame-independent schema rule.
std::string canonicalize_plan(const MaintenancePlan& plan);

struct StructuralMatch {
  std::size_t matched = 0;
  std::size_t denominator = 0;  // max(|items|, |dets|)

  double score() const {
    return denominator == 0 ? 1.0 : static_cast<double>(matched) / denominator;
  }
};

/// One-to-one class-consistent matching between plan items and detections
/// with IoU >= threshold. Pairs are seeded greedily by descending IoU and
/// then augmented to a maximum matching.
StructuralMatch structural_match(const MaintenancePlan& plan, const DetectionSet& dets,
                                 double iou_threshold = 0.5);

double structural_accuracy(const MaintenancePlan& plan, const DetectionSet& dets,
                           double iou_threshold = 0.5);

/// First well-formed JSON object embedded in free text (verbatim span), or
/// empty.
std::string extract_json_object(std::string_view text);

/// First embedded JSON object that `accept` approves.
std::optional<nlohmann::json> find_json_object(
    std::string_view text, const std::function<bool(const nlohmann::json&)>& accept);

}  // namespace infragpt::schema
