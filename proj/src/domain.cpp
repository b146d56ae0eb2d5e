#include "infragpt/domain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <tuple>

#include "infragpt/errors.hpp"

namespace infragpt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidGeometry: return "invalid-geometry";
    case ErrorCode::kPrecondition: return "precondition";
    case ErrorCode::kBackendUnavailable: return "backend-unavailable";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kTemplate: return "template";
    case ErrorCode::kScreenParse: return "screen-parse";
    case ErrorCode::kContract: return "contract";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kScriptMissing: return "script-missing";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kEvalInput: return "eval-input";
  }
  return "unknown";
}

void check_frame(const Frame& frame) {
  if (frame.frame_id.empty()) {
    throw Error(ErrorCode::kPrecondition, "frame_id must be non-empty");
  }
  if (frame.width_px <= 0 || frame.height_px <= 0) {
    throw Error(ErrorCode::kPrecondition,
                "frame " + frame.frame_id + " has non-positive dimensions");
  }
}

bool is_valid(const BBox& box) {
  return std::isfinite(box.x_min) && std::isfinite(box.y_min) &&
         std::isfinite(box.x_max) && std::isfinite(box.y_max) &&
         box.x_max >= box.x_min && box.y_max >= box.y_min;
}

BBox bbox_from_center(double cx, double cy, double w, double h) {
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) ||
      !std::isfinite(h)) {
    throw Error(ErrorCode::kInvalidGeometry, "non-finite box coordinate");
  }
  if (w < 0.0 || h < 0.0) {
    throw Error(ErrorCode::kInvalidGeometry, "negative box extent");
  }
  return BBox{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
}

BBox bbox_clamp(const BBox& box, const Frame& frame) {
  const double w = frame.width_px;
  const double h = frame.height_px;
  return BBox{std::clamp(box.x_min, 0.0, w), std::clamp(box.y_min, 0.0, h),
              std::clamp(box.x_max, 0.0, w), std::clamp(box.y_max, 0.0, h)};
}

bool detection_order(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  return std::tie(a.class_label, a.bbox.x_min, a.bbox.y_min, a.bbox.x_max,
                  a.bbox.y_max, a.model_id) <
         std::tie(b.class_label, b.bbox.x_min, b.bbox.y_min, b.bbox.x_max,
                  b.bbox.y_max, b.model_id);
}

void sort_detections(DetectionSet& dets) {
  std::stable_sort(dets.begin(), dets.end(), detection_order);
}

std::string_view to_string(Severity severity) {
  switch (severity) {
    case Severity::kLow: return "low";
    case Severity::kMedium: return "medium";
    case Severity::kHigh: return "high";
    case Severity::kUrgent: return "urgent";
  }
  return "low";
}

std::optional<Severity> parse_severity(std::string_view text) {
  if (text == "low") return Severity::kLow;
  if (text == "medium") return Severity::kMedium;
  if (text == "high") return Severity::kHigh;
  if (text == "urgent") return Severity::kUrgent;
  return std::nullopt;
}

std::string_view to_string(SizeUnit unit) {
  return unit == SizeUnit::kMeters ? "m" : "px";
}

std::optional<SizeUnit> parse_size_unit(std::string_view text) {
  if (text == "px") return SizeUnit::kPixels;
  if (text == "m") return SizeUnit::kMeters;
  return std::nullopt;
}

std::string_view to_string(RecordStatus status) {
  switch (status) {
    case RecordStatus::kNoDefects: return "no_defects";
    case RecordStatus::kPlanned: return "planned";
    case RecordStatus::kPlanFailed: return "plan_failed";
    case RecordStatus::kScreenFailed: return "screen_failed";
    case RecordStatus::kDetectionFailed: return "detection_failed";
  }
  return "no_defects";
}

std::optional<RecordStatus> parse_record_status(std::string_view text) {
  for (auto s : {RecordStatus::kNoDefects, RecordStatus::kPlanned,
                 RecordStatus::kPlanFailed, RecordStatus::kScreenFailed,
                 RecordStatus::kDetectionFailed}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

// --- serialization -------------------------------------------------------

ordered_json to_json(const Frame& frame) {
  ordered_json j;
  j["frame_id"] = frame.frame_id;
  j["image_path"] = frame.image_path;
  j["width_px"] = frame.width_px;
  j["height_px"] = frame.height_px;
  j["source_id"] = frame.source_id;
  j["timestamp"] = frame.timestamp;
  if (frame.location) {
    j["location"] = {{"lat", frame.location->lat}, {"lon", frame.location->lon}};
  } else {
    j["location"] = nullptr;
  }
  return j;
}

ordered_json to_json(const DecisionVector& decision) {
  ordered_json j;
  j["crack"] = decision.crack ? 1 : 0;
  j["leak"] = decision.leak ? 1 : 0;
  j["other"] = decision.other ? 1 : 0;
  return j;
}

ordered_json to_json(const BBox& box) {
  return ordered_json::array({box.x_min, box.y_min, box.x_max, box.y_max});
}

ordered_json to_json(const Detection& det) {
  ordered_json j;
  j["bbox"] = to_json(det.bbox);
  j["class_label"] = det.class_label;
  j["confidence"] = det.confidence;
  j["model_id"] = det.model_id;
  return j;
}

ordered_json to_json(const DetectionSet& dets) {
  ordered_json arr = ordered_json::array();
  for (const auto& d : dets) arr.push_back(to_json(d));
  return arr;
}

ordered_json to_json(const ActionItem& item) {
  ordered_json j;
  j["type"] = item.type;
  j["class"] = item.class_label;
  j["bbox"] = to_json(item.bbox);
  j["size"] = ordered_json::array({item.size[0], item.size[1]});
  j["size_unit"] = to_string(item.size_unit);
  j["confidence"] = item.confidence;
  j["severity"] = to_string(item.severity);
  j["loc"] = item.loc;
  j["risks"] = item.risks;
  j["causes"] = item.causes;
  ordered_json actions = ordered_json::array();
  for (const auto& a : item.actions) actions.push_back({{"text", a}});
  j["actions"] = std::move(actions);
  j["tools"] = item.tools;
  j["notes"] = item.notes;
  // nlohmann::json iterates keys sorted, so extras come out in a stable order.
  for (const auto& [key, value] : item.extra.items()) {
    j[key] = ordered_json::parse(value.dump());
  }
  return j;
}

ordered_json plan_document(const MaintenancePlan& plan) {
  ordered_json items = ordered_json::array();
  for (const auto& item : plan.items) items.push_back(to_json(item));
  ordered_json j;
  j["items"] = std::move(items);
  return j;
}

ordered_json to_json(const MaintenancePlan& plan) {
  ordered_json j = plan_document(plan);
  j["raw_text"] = plan.raw_text;
  j["repaired"] = plan.repaired;
  return j;
}

ordered_json to_json(const PipelineRecord& record) {
  ordered_json j;
  j["frame_id"] = record.frame_id;
  j["decision"] = to_json(record.decision);
  j["detections"] = to_json(record.detections);
  j["plan"] = record.plan ? to_json(*record.plan) : ordered_json(nullptr);
  j["status"] = to_string(record.status);
  j["latencies_ms"] = {{"screen", record.latencies_ms.screen},
                       {"detect", record.latencies_ms.detect},
                       {"plan", record.latencies_ms.plan},
                       {"total", record.latencies_ms.total}};
  ordered_json attempts = ordered_json::array();
  for (const auto& a : record.plan_attempts) {
    attempts.push_back({{"attempt_index", a.attempt_index},
                        {"accepted", a.accepted},
                        {"violations", a.violations}});
  }
  j["plan_attempts"] = std::move(attempts);
  j["warnings"] = record.warnings;
  return j;
}

namespace {

[[noreturn]] void bad(const std::string& what) {
  throw Error(ErrorCode::kProtocol, what);
}

const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    bad(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

std::string string_field(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) bad(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

double number_field(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number()) bad(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::string optional_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  if (!j.at(key).is_string()) {
    bad(std::string("field '") + key + "' must be a string");
  }
  return j.at(key).get<std::string>();
}

bool flag_value(const nlohmann::json& v, const char* key) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer() || v.is_number_unsigned()) {
    auto n = v.get<std::int64_t>();
    if (n == 0 || n == 1) return n == 1;
  }
  bad(std::string("flag '") + key + "' must be 0/1 or a boolean");
}

}  // namespace

Frame frame_from_json(const nlohmann::json& j) {
  Frame f;
  f.frame_id = string_field(j, "frame_id");
  f.image_path = string_field(j, "image_path");
  f.width_px = static_cast<int>(number_field(j, "width_px"));
  f.height_px = static_cast<int>(number_field(j, "height_px"));
  f.source_id = optional_string(j, "source_id");
  f.timestamp = j.contains("timestamp") ? j.at("timestamp").get<std::int64_t>() : 0;
  if (j.contains("location") && !j.at("location").is_null()) {
    const auto& loc = j.at("location");
    f.location = GeoLocation{number_field(loc, "lat"), number_field(loc, "lon")};
  }
  return f;
}

DecisionVector decision_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.size() != 3) {
    bad("decision vector must be an object with exactly three flags");
  }
  return DecisionVector{flag_value(field(j, "crack"), "crack"),
                        flag_value(field(j, "leak"), "leak"),
                        flag_value(field(j, "other"), "other")};
}

BBox bbox_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) bad("bbox must be an array of 4 numbers");
  for (const auto& v : j) {
    if (!v.is_number()) bad("bbox must be an array of 4 numbers");
  }
  return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
              j[3].get<double>()};
}

Detection detection_from_json(const nlohmann::json& j) {
  Detection d;
  d.bbox = bbox_from_json(field(j, "bbox"));
  d.class_label = string_field(j, "class_label");
  d.confidence = number_field(j, "confidence");
  d.model_id = optional_string(j, "model_id");
  return d;
}

ActionItem action_item_from_json(const nlohmann::json& j) {
  static const char* kKnown[] = {"type",   "class",    "bbox",  "size",
                                 "size_unit", "confidence", "severity", "loc",
                                 "risks",  "causes",   "actions", "tools",
                                 "notes"};
  ActionItem item;
  item.type = string_field(j, "type");
  item.class_label = string_field(j, "class");
  item.bbox = bbox_from_json(field(j, "bbox"));
  const auto& size = field(j, "size");
  if (!size.is_array() || size.size() != 2 || !size[0].is_number() ||
      !size[1].is_number()) {
    bad("size must be an array of 2 numbers");
  }
  item.size = {size[0].get<double>(), size[1].get<double>()};
  if (j.contains("size_unit")) {
    auto unit = parse_size_unit(string_field(j, "size_unit"));
    if (!unit) bad("size_unit must be 'px' or 'm'");
    item.size_unit = *unit;
  }
  item.confidence = number_field(j, "confidence");
  auto sev = parse_severity(string_field(j, "severity"));
  if (!sev) bad("unknown severity");
  item.severity = *sev;
  item.loc = string_field(j, "loc");
  item.risks = optional_string(j, "risks");
  item.causes = optional_string(j, "causes");
  for (const auto& a : field(j, "actions")) item.actions.push_back(string_field(a, "text"));
  for (const auto& t : field(j, "tools")) {
    if (!t.is_string()) bad("tools must be strings");
    item.tools.push_back(t.get<std::string>());
  }
  item.notes = optional_string(j, "notes");
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
      item.extra[key] = value;
    }
  }
  return item;
}

MaintenancePlan plan_from_json(const nlohmann::json& j) {
  MaintenancePlan plan;
  const auto& items = field(j, "items");
  if (!items.is_array()) bad("items must be an array");
  for (const auto& it : items) plan.items.push_back(action_item_from_json(it));
  plan.raw_text = optional_string(j, "raw_text");
  if (j.contains("repaired")) plan.repaired = j.at("repaired").get<bool>();
  return plan;
}

PipelineRecord record_from_json(const nlohmann::json& j) {
  PipelineRecord r;
  r.frame_id = string_field(j, "frame_id");
  r.decision = decision_from_json(field(j, "decision"));
  for (const auto& d : field(j, "detections")) r.detections.push_back(detection_from_json(d));
  if (j.contains("plan") && !j.at("plan").is_null()) r.plan = plan_from_json(j.at("plan"));
  auto status = parse_record_status(string_field(j, "status"));
  if (!status) bad("unknown record status");
  r.status = *status;
  if (j.contains("latencies_ms")) {
    const auto& l = j.at("latencies_ms");
    r.latencies_ms = StageLatencies{l.value("screen", std::int64_t{0}),
                                    l.value("detect", std::int64_t{0}),
                                    l.value("plan", std::int64_t{0}),
                                    l.value("total", std::int64_t{0})};
  }
  if (j.contains("plan_attempts")) {
    for (const auto& a : j.at("plan_attempts")) {
      r.plan_attempts.push_back(AttemptSummary{
          a.value("attempt_index", 0), a.value("accepted", false),
          a.value("violations", std::vector<std::string>{})});
    }
  }
  if (j.contains("warnings")) {
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
  }
  return r;
}

// --- canonical text ------------------------------------------------------

std::string format_number(double value) {
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::kContract, "non-finite number in canonical output");
  }
  if (value == 0.0) return "0";  // also folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  std::string out(buf);
  if (out == "-0") return "0";
  return out;
}

namespace {

void dump_into(const ordered_json& v, std::string& out) {
  switch (v.type()) {
    case ordered_json::value_t::object: {
      out.push_back('{');
      bool first = true;
      for (const auto& [key, child] : v.items()) {
        if (!first) out.push_back(',');
        first = false;
        out += ordered_json(key).dump(-1, ' ', false,
                                      ordered_json::error_handler_t::replace);
        out.push_back(':');
        dump_into(child, out);
      }
      out.push_back('}');
      break;
    }
    case ordered_json::value_t::array: {
      out.push_back('[');
      bool first = true;
      for (const auto& child : v) {
        if (!first) out.push_back(',');
        first = false;
        dump_into(child, out);
      }
      out.push_back(']');
      break;
    }
    case ordered_json::value_t::number_float:
      out += format_number(v.get<double>());
      break;
    default:
      out += v.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
  }
}

}  // namespace

std::string canonical_dump(const ordered_json& value) {
  std::string out;
  dump_into(value, out);
  return out;
}

std::string record_line(const PipelineRecord& record) {
  return canonical_dump(to_json(record));
}

}  // namespace infragpt
