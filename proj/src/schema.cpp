#include "infragpt/schema.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <tuple>

#include "infragpt/errors.hpp"
#include "infragpt/metrics.hpp"

namespace infragpt::schema {

namespace {

using nlohmann::json;

constexpr const char* kRequiredItemFields[] = {
    "type", "class", "bbox", "size", "confidence", "severity", "loc", "actions", "tools"};

class Checker {
 public:
  Checker(const Frame& frame, ValidationReport& report) : frame_(frame), report_(report) {}

  void fail(std::string path, std::string rule, std::string message) {
    report_.violations.push_back({std::move(path), std::move(rule), std::move(message)});
  }

  void warn(std::string path, std::string rule, std::string message) {
    report_.warnings.push_back({std::move(path), std::move(rule), std::move(message)});
  }

  bool expect_string(const json& v, const std::string& path) {
    if (v.is_string()) return true;
    fail(path, "type", "expected a string");
    return false;
  }

  void check_bbox(const json& v, const std::string& path) {
    if (!v.is_array()) {
      fail(path, "type", "bbox must be an array of 4 numbers");
      return;
    }
    if (v.size() != 4) {
      fail(path, "length", "bbox must have exactly 4 elements, got " + std::to_string(v.size()));
      return;
    }
    for (const auto& c : v) {
      if (!c.is_number()) {
        fail(path, "type", "bbox elements must be numbers");
        return;
      }
    }
    const double x0 = v[0].get<double>(), y0 = v[1].get<double>();
    const double x1 = v[2].get<double>(), y1 = v[3].get<double>();
    if (x1 < x0 || y1 < y0) {
      fail(path, "corner-ordering", "bbox must satisfy x_max >= x_min and y_max >= y_min");
    }
    const double w = frame_.width_px, h = frame_.height_px;
    auto inside = [](double c, double hi) { return c >= 0.0 && c <= hi; };
    if (!inside(x0, w) || !inside(x1, w) || !inside(y0, h) || !inside(y1, h)) {
      fail(path, "out-of-bounds",
           "bbox must lie within the " + std::to_string(frame_.width_px) + "x" +
               std::to_string(frame_.height_px) + " frame");
    }
  }

  void check_item(const json& item, const std::string& path) {
    if (!item.is_object()) {
      fail(path, "type", "item must be an object");
      return;
    }
    for (const char* key : kRequiredItemFields) {
      if (!item.contains(key)) {
        fail(path, "required-field", std::string("missing required field '") + key + "'");
      }
    }
    for (const auto& [key, value] : item.items()) {
      const std::string sub = path + "." + key;
      if (key == "type" || key == "class" || key == "loc" || key == "risks" ||
          key == "causes" || key == "notes") {
        expect_string(value, sub);
      } else if (key == "bbox") {
        check_bbox(value, sub);
      } else if (key == "size") {
        if (!value.is_array() || value.size() != 2 || !value[0].is_number() ||
            !value[1].is_number()) {
          fail(sub, "type", "size must be an array of 2 numbers");
        } else if (value[0].get<double>() < 0.0 || value[1].get<double>() < 0.0) {
          fail(sub, "range", "size must be non-negative");
        }
      } else if (key == "size_unit") {
        if (expect_string(value, sub) && !parse_size_unit(value.get<std::string>())) {
          fail(sub, "enum", "size_unit must be one of px, m");
        }
      } else if (key == "confidence") {
        if (!value.is_number()) {
          fail(sub, "type", "confidence must be a number");
        } else if (const double c = value.get<double>(); !(c >= 0.0 && c <= 1.0)) {
          fail(sub, "range", "confidence must lie in [0, 1]");
        }
      } else if (key == "severity") {
        if (expect_string(value, sub) && !parse_severity(value.get<std::string>())) {
          fail(sub, "enum", "severity must be one of low, medium, high, urgent");
        }
      } else if (key == "actions") {
        check_actions(value, sub);
      } else if (key == "tools") {
        if (!value.is_array()) {
          fail(sub, "type", "tools must be an array of strings");
        } else {
          for (std::size_t k = 0; k < value.size(); ++k) {
            expect_string(value[k], sub + "[" + std::to_string(k) + "]");
          }
        }
      } else {
        warn(sub, "unknown-field", "field is not part of the schema");
      }
    }
  }

  void check_actions(const json& value, const std::string& path) {
    if (!value.is_array()) {
      fail(path, "type", "actions must be an array of {\"text\": string} objects");
      return;
    }
    if (value.empty()) {
      fail(path, "non-empty", "actions must contain at least one entry");
      return;
    }
    for (std::size_t k = 0; k < value.size(); ++k) {
      const std::string sub = path + "[" + std::to_string(k) + "]";
      const auto& a = value[k];
      if (!a.is_object()) {
        fail(sub, "type", "action must be an object");
      } else if (!a.contains("text")) {
        fail(sub, "required-field", "missing required field 'text'");
      } else {
        expect_string(a.at("text"), sub + ".text");
      }
    }
  }

 private:
  const Frame& frame_;
  ValidationReport& report_;
};

struct Found {
  json value;
  std::string_view span;
};

// Calls fn on each balanced {...} span that parses as a JSON object, in
// order of its opening brace, until fn returns true.
std::optional<Found> scan_objects(std::string_view text,
                                  const std::function<bool(const json&)>& fn) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    std::size_t end = std::string_view::npos;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          end = i;
          break;
        }
      }
    }
    if (end == std::string_view::npos) continue;
    const std::string_view span = text.substr(start, end - start + 1);
    json parsed = json::parse(span, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object() && fn(parsed)) {
      return Found{std::move(parsed), span};
    }
  }
  return std::nullopt;
}

}  // namespace

std::string ValidationReport::describe() const {
  std::string out;
  for (const auto& v : violations) {
    out += v.path + ": " + v.rule + ": " + v.message + "\n";
  }
  return out;
}

ordered_json to_json(const ValidationReport& report) {
  auto list = [](const std::vector<Violation>& vs) {
    ordered_json arr = ordered_json::array();
    for (const auto& v : vs) {
      arr.push_back({{"path", v.path}, {"rule", v.rule}, {"message", v.message}});
    }
    return arr;
  };
  ordered_json j;
  j["syntactic_ok"] = report.syntactic_ok;
  j["violations"] = list(report.violations);
  j["warnings"] = list(report.warnings);
  j["valid"] = report.valid();
  return j;
}

ValidationReport validate_plan(std::string_view document, const Frame& frame,
                               ValidationOptions options) {
  ValidationReport report;
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::exception& e) {
    report.violations.push_back({"$", "syntax", "document is not well-formed JSON"});
    return report;
  }
  report.syntactic_ok = true;
  Checker check(frame, report);

  if (!doc.is_object()) {
    check.fail("$", "type", "document must be a JSON object");
    return report;
  }
  if (!doc.contains("items")) {
    check.fail("$", "required-field", "missing required field 'items'");
  } else if (const auto& items = doc.at("items"); !items.is_array()) {
    check.fail("$.items", "type", "items must be an array");
  } else {
    if (options.require_items && items.empty()) {
      check.fail("$.items", "non-empty", "plan has no items but detections exist");
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
      check.check_item(items[i], "$.items[" + std::to_string(i) + "]");
    }
  }
  for (const auto& [key, value] : doc.items()) {
    if (key != "items") {
      check.fail("$." + key, "unknown-field", "unknown top-level field");
    }
  }
  return report;
}

MaintenancePlan parse_plan(std::string_view document, const Frame& frame) {
  const ValidationReport report = validate_plan(document, frame);
  if (!report.valid()) {
    throw Error(ErrorCode::kContract, "plan is not schema-valid:\n" + report.describe());
  }
  MaintenancePlan plan = plan_from_json(json::parse(document));
  plan.raw_text = std::string(document);
  return plan;
}

std::string canonicalize_plan(const MaintenancePlan& plan) {
  for (std::size_t i = 0; i < plan.items.size(); ++i) {
    const ActionItem& it = plan.items[i];
    const std::string where = "item " + std::to_string(i) + ": ";
    if (!is_valid(it.bbox)) throw Error(ErrorCode::kContract, where + "invalid bbox");
    if (!(it.confidence >= 0.0 && it.confidence <= 1.0)) {
      throw Error(ErrorCode::kContract, where + "confidence outside [0, 1]");
    }
    if (!(it.size[0] >= 0.0 && it.size[1] >= 0.0) || !std::isfinite(it.size[0]) ||
        !std::isfinite(it.size[1])) {
      throw Error(ErrorCode::kContract, where + "invalid size");
    }
    if (it.actions.empty()) throw Error(ErrorCode::kContract, where + "no actions");
  }
  return canonical_dump(plan_document(plan));
}

StructuralMatch structural_match(const MaintenancePlan& plan, const DetectionSet& dets,
                                 double iou_threshold) {
  const std::size_t n_items = plan.items.size();
  const std::size_t n_dets = dets.size();
  StructuralMatch result;
  result.denominator = std::max(n_items, n_dets);

  struct Edge {
    double iou;
    std::size_t item;
    std::size_t det;
  };
  std::vector<Edge> edges;
  std::vector<std::vector<std::size_t>> adjacency(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    for (std::size_t d = 0; d < n_dets; ++d) {
      if (plan.items[i].class_label != dets[d].class_label) continue;
      const double v = metrics::iou(plan.items[i].bbox, dets[d].bbox);
      if (v >= iou_threshold) {
        edges.push_back({v, i, d});
        adjacency[i].push_back(d);
      }
    }
  }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.iou > b.iou;
  });

  constexpr std::size_t kFree = static_cast<std::size_t>(-1);
  std::vector<std::size_t> item_to_det(n_items, kFree);
  std::vector<std::size_t> det_to_item(n_dets, kFree);
  for (const Edge& e : edges) {
    if (item_to_det[e.item] == kFree && det_to_item[e.det] == kFree) {
      item_to_det[e.item] = e.det;
      det_to_item[e.det] = e.item;
    }
  }

  // Augmenting paths lift the greedy seed to a maximum matching, so a
  // perfect correspondence is always found when one exists.
  std::vector<bool> visited;
  std::function<bool(std::size_t)> augment = [&](std::size_t item) {
    for (std::size_t d : adjacency[item]) {
      if (visited[d]) continue;
      visited[d] = true;
      if (det_to_item[d] == kFree || augment(det_to_item[d])) {
        item_to_det[item] = d;
        det_to_item[d] = item;
        return true;
      }
    }
    return false;
  };
  for (std::size_t i = 0; i < n_items; ++i) {
    if (item_to_det[i] != kFree) continue;
    visited.assign(n_dets, false);
    augment(i);
  }
  result.matched = static_cast<std::size_t>(
      std::count_if(item_to_det.begin(), item_to_det.end(),
                    [&](std::size_t d) { return d != kFree; }));
  return result;
}

double structural_accuracy(const MaintenancePlan& plan, const DetectionSet& dets,
                           double iou_threshold) {
  return structural_match(plan, dets, iou_threshold).score();
}

std::string extract_json_object(std::string_view text) {
  auto found = scan_objects(text, [](const json&) { return true; });
  return found ? std::string(found->span) : std::string{};
}

std::optional<nlohmann::json> find_json_object(
    std::string_view text, const std::function<bool(const nlohmann::json&)>& accept) {
  auto found = scan_objects(text, accept);
  if (!found) return std::nullopt;
  return std::move(found->value);
}

}  // namespace infragpt::schema
