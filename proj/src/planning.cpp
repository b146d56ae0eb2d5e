#include "infragpt/planning.hpp"

#include <fstream>

#include "infragpt/assets.hpp"
#include "infragpt/errors.hpp"

namespace infragpt::planning {

using nlohmann::json;

FallbackTable FallbackTable::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "fallback table must be a JSON object");
  FallbackTable table;
  for (const auto& [cls, row] : j.items()) {
    FallbackRow r;
    try {
      r.risks = row.value("risks", std::string{});
      r.causes = row.value("causes", std::string{});
      r.actions = row.at("actions").get<std::vector<std::string>>();
      r.tools = row.at("tools").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfig, "fallback row '" + cls + "': " + e.what());
    }
    if (r.actions.empty()) {
      throw Error(ErrorCode::kConfig, "fallback row '" + cls + "' has no actions");
    }
    table.rows_[cls] = std::move(r);
  }
  if (!table.rows_.count("*")) {
    throw Error(ErrorCode::kConfig, "fallback table needs a \"*\" default row");
  }
  return table;
}

FallbackTable FallbackTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot read fallback table " + path.string());
  json parsed = json::parse(in, nullptr, false);
  if (parsed.is_discarded()) {
    throw Error(ErrorCode::kConfig, "fallback table " + path.string() + " is not valid JSON");
  }
  return from_json(parsed);
}

const FallbackTable& FallbackTable::defaults() {
  static const FallbackTable table = from_json(json::parse(assets::fallback_actions()));
  return table;
}

const FallbackRow& FallbackTable::row(const std::string& class_label) const {
  auto it = rows_.find(class_label);
  return it != rows_.end() ? it->second : rows_.at("*");
}

Severity fallback_severity(const Detection& det) {
  if (det.confidence >= 0.8) {
    return det.class_label == "leak" ? Severity::kUrgent : Severity::kHigh;
  }
  if (det.confidence >= 0.5) return Severity::kMedium;
  return Severity::kLow;
}

MaintenancePlan fallback_plan(const DetectionSet& dets, const FallbackTable& table,
                              const PlanContext& context) {
  MaintenancePlan plan;
  plan.repaired = true;
  for (const Detection& d : dets) {
    const FallbackRow& row = table.row(d.class_label);
    ActionItem item;
    item.type = d.class_label;
    item.class_label = d.class_label;
    item.bbox = d.bbox;
    item.size = {d.bbox.width(), d.bbox.height()};
    if (context.pixels_per_meter && *context.pixels_per_meter > 0.0) {
      item.size = {item.size[0] / *context.pixels_per_meter, item.size[1] / *context.pixels_per_meter};
      item.size_unit = SizeUnit::kMeters;
    }
    item.confidence = d.confidence;
    item.severity = fallback_severity(d);
    item.loc = context.source_id;
    item.risks = row.risks;
    item.causes = row.causes;
    item.actions = row.actions;
    item.tools = row.tools;
    item.notes = "auto-generated fallback";
    plan.items.push_back(std::move(item));
  }
  return plan;
}

std::string build_plan_prompt(const screening::PromptTemplate& tmpl, const Frame& frame,
                              const DetectionSet& dets) {
  if (dets.empty()) {
    throw Error(ErrorCode::kPrecondition, "plan prompt needs at least one detection");
  }
  std::string serialized;
  for (const Detection& d : dets) {
    ordered_json j;
    j["class"] = d.class_label;
    j["bbox"] = to_json(d.bbox);
    j["confidence"] = d.confidence;
    if (!serialized.empty()) serialized.push_back('\n');
    serialized += canonical_dump(j);
  }
  std::string prompt = screening::render(tmpl,
                                         {{"source_id", frame.source_id},
                                          {"timestamp", std::to_string(frame.timestamp)},
                                          {"detections", serialized}},
                                         {"detections"});
  prompt += "\n\nThe JSON document must follow this schema skeleton exactly:\n";
  prompt += assets::plan_skeleton();
  return prompt;
}

std::string plan_document_text(const std::string& reply) {
  if (json::accept(reply)) return reply;
  std::string embedded = schema::extract_json_object(reply);
  return embedded.empty() ? reply : embedded;
}

namespace {

std::string repair_suffix(const schema::ValidationReport& report) {
  std::string out = "\n\nYour previous response was rejected by the schema validator:\n";
  for (const auto& v : report.violations) {
    out += "- " + v.path + " [" + v.rule + "] " + v.message + "\n";
  }
  out += "Fix these violations and re-emit the complete JSON document only.";
  return out;
}

}  // namespace

PlanResult generate_plan(const Frame& frame, const DetectionSet& dets,
                         const screening::PromptTemplate& tmpl, backends::VlmBackend& backend,
                         const PlanOptions& options) {
  if (options.max_repairs < 0) {
    throw Error(ErrorCode::kPrecondition, "max_repairs must be >= 0");
  }
  const std::string base_prompt = build_plan_prompt(tmpl, frame, dets);
  const FallbackTable& table = options.fallback ? *options.fallback : FallbackTable::defaults();
  const PlanContext context{frame.source_id, options.pixels_per_meter};

  backends::VlmRequest request;
  request.model = options.model;
  request.images.push_back(backends::encode_image_file(frame.image_path));
  request.max_tokens = options.max_tokens;
  request.temperature = options.temperature;

  PlanResult result;
  std::string prompt = base_prompt;
  for (int attempt = 0; attempt <= options.max_repairs; ++attempt) {
    request.prompt = prompt;
    backends::VlmResponse response;
    try {
      response = backends::vlm_generate(request, backend,
                                        {frame.frame_id, backends::CallKind::kPlan}, options.retry);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kBackendUnavailable && e.code() != ErrorCode::kProtocol) throw;
      result.backend_failure = e.what();
      break;
    }
    result.latency_ms += response.latency_ms;

    PlanAttempt record;
    record.attempt_index = attempt;
    record.raw_text = response.text;
    const std::string document = plan_document_text(response.text);
    record.validation = schema::validate_plan(document, frame, {.require_items = true});
    record.accepted = record.validation.valid();
    if (record.accepted) {
      result.plan = plan_from_json(json::parse(document));
      result.plan.raw_text = response.text;
      result.plan.repaired = attempt > 0;
      result.attempts.push_back(std::move(record));
      return result;
    }
    prompt = base_prompt + repair_suffix(record.validation);
    result.attempts.push_back(std::move(record));
  }

  result.plan = fallback_plan(dets, table, context);
  result.used_fallback = true;
  return result;
}

}  // namespace infragpt::planning
