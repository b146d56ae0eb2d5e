#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace infragpt {

using ordered_json = nlohmann::ordered_json;

struct GeoLocation {
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const GeoLocation&) const = default;
};

// One camera image plus provenance. Pixels are never decoded here.
struct Frame {
  std::string frame_id;
  std::string image_path;
  int width_px = 0;
  int height_px = 0;
  std::string source_id;
  std::int64_t timestamp = 0;
  std::optional<GeoLocation> location;

  bool operator==(const Frame&) const = default;
};

// Throws kPrecondition if the frame violates its invariants.
void check_frame(const Frame& frame);

struct DecisionVector {
  bool crack = false;
  bool leak = false;
  bool other = false;

  bool any() const { return crack || leak || other; }
  bool operator==(const DecisionVector&) const = default;
};

// Canonical corner format, pixel coordinates.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool operator==(const BBox&) const = default;
};

bool is_valid(const BBox& box);

/// Converts a center/size box to corner format.
/// Throws kInvalidGeometry on negative extent or non-finite input.
BBox bbox_from_center(double cx, double cy, double w, double h);

/// Clamps every coordinate into the frame extent.
BBox bbox_clamp(const BBox& box, const Frame& frame);

struct Detection {
  BBox bbox;
  std::string class_label;
  double confidence = 0.0;
  std::string model_id;

  bool operator==(const Detection&) const = default;
};

using DetectionSet = std::vector<Detection>;

// Descending confidence, then class_label, then x_min; remaining fields
// break any leftover ties so the order is total.
bool detection_order(const Detection& a, const Detection& b);
void sort_detections(DetectionSet& dets);

enum class Severity { kLow, kMedium, kHigh, kUrgent };

std::string_view to_string(Severity severity);
std::optional<Severity> parse_severity(std::string_view text);

enum class SizeUnit { kPixels, kMeters };

std::string_view to_string(SizeUnit unit);
std::optional<SizeUnit> parse_size_unit(std::string_view text);

struct ActionItem {
  std::string type;
  std::string class_label;
  BBox bbox;
  std::array<double, 2> size{0.0, 0.0};
  SizeUnit size_unit = SizeUnit::kPixels;
  double confidence = 0.0;
  Severity severity = Severity::kLow;
  std::string loc;
  std::string risks;
  std::string causes;
  std::vector<std::string> actions;
  std::vector<std::string> tools;
  std::string notes;
  // Item-level fields outside the schema, kept so a plan survives a
  // parse/serialize round trip.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const ActionItem&) const = default;
};

struct MaintenancePlan {
  std::vector<ActionItem> items;
  std::string raw_text;
  bool repaired = false;

  bool operator==(const MaintenancePlan&) const = default;
};

enum class RecordStatus {
  kNoDefects,
  kPlanned,
  kPlanFailed,
  kScreenFailed,
  kDetectionFailed,
};

std::string_view to_string(RecordStatus status);
std::optional<RecordStatus> parse_record_status(std::string_view text);

// Audit entry for one planner call; the full report lives in planning.
struct AttemptSummary {
  int attempt_index = 0;
  bool accepted = false;
  std::vector<std::string> violations;

  bool operator==(const AttemptSummary&) const = default;
};

struct StageLatencies {
  std::int64_t screen = 0;
  std::int64_t detect = 0;
  std::int64_t plan = 0;
  std::int64_t total = 0;

  bool operator==(const StageLatencies&) const = default;
};

struct PipelineRecord {
  std::string frame_id;
  DecisionVector decision;
  DetectionSet detections;
  std::optional<MaintenancePlan> plan;
  RecordStatus status = RecordStatus::kNoDefects;
  StageLatencies latencies_ms;
  std::vector<AttemptSummary> plan_attempts;
  std::vector<std::string> warnings;

  bool operator==(const PipelineRecord&) const = default;
};

// --- JSON --------------------------------------------------------------
// Field order follows the struct declarations above.

ordered_json to_json(const Frame& frame);
ordered_json to_json(const DecisionVector& decision);
ordered_json to_json(const BBox& box);
ordered_json to_json(const Detection& det);
ordered_json to_json(const DetectionSet& dets);
ordered_json to_json(const ActionItem& item);
ordered_json plan_document(const MaintenancePlan& plan);  // {"items": [...]}
ordered_json to_json(const MaintenancePlan& plan);
ordered_json to_json(const PipelineRecord& record);

Frame frame_from_json(const nlohmann::json& j);
DecisionVector decision_from_json(const nlohmann::json& j);
BBox bbox_from_json(const nlohmann::json& j);
Detection detection_from_json(const nlohmann::json& j);
ActionItem action_item_from_json(const nlohmann::json& j);
MaintenancePlan plan_from_json(const nlohmann::json& j);
PipelineRecord record_from_json(const nlohmann::json& j);

/// Compact JSON with numbers rendered to 6 significant digits and no
/// trailing zeros. Object keys keep their stored order.
std::string canonical_dump(const ordered_json& value);
std::string format_number(double value);

/// One LF-free line of canonical JSON for the record log.
std::string record_line(const PipelineRecord& record);

}  // namespace infragpt
