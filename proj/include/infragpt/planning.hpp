#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "infragpt/backends.hpp"
#include "infragpt/domain.hpp"
#include "infragpt/schema.hpp"
#include "infragpt/screening.hpp"

namespace infragpt::planning {

struct FallbackRow {
  std::string risks;
  std::string causes;
  std::vector<std::string> actions;
  std::vector<std::string> tools;
};

// Per-class canned actions/tools. The "*" row covers unlisted classes.
class FallbackTable {
 public:
  static FallbackTable from_json(const nlohmann::json& j);
  static FallbackTable load(const std::filesystem::path& path);
  static const FallbackTable& defaults();

  const FallbackRow& row(const std::string& class_label) const;

 private:
  std::map<std::string, FallbackRow> rows_;
};

struct PlanContext {
  std::string source_id;  // fills ActionItem::loc
  std::optional<double> pixels_per_meter;
};

Severity fallback_severity(const Detection& det);

/// One templated item per detection; a pure function of its inputs.
MaintenancePlan fallback_plan(const DetectionSet& dets,
                              const FallbackTable& table = FallbackTable::defaults(),
                              const PlanContext& context = {});

/// Throws kPrecondition on an empty detection set and kTemplate when the
/// template lacks {detections} or uses an unknown placeholder.
std::string build_plan_prompt(const screening::PromptTemplate& tmpl, const Frame& frame,
                              const DetectionSet& dets);

struct PlanAttempt {
  int attempt_index = 0;
  std::string raw_text;
  schema::ValidationReport validation;
  bool accepted = false;
};

struct PlanOptions {
  std::string model = "vlm";
  int max_tokens = 1024;
  double temperature = 0.0;
  int max_repairs = 2;
  backends::RetryPolicy retry = backends::RetryPolicy::live();
  const FallbackTable* fallback = nullptr;  // defaults() when null
  std::optional<double> pixels_per_meter;
};

struct PlanResult {
  MaintenancePlan plan;
  std::vector<PlanAttempt> attempts;
  bool used_fallback = false;
  // Set when the backend became unreachable; the plan is then the fallback.
  std::optional<std::string> backend_failure;
  std::int64_t latency_ms = 0;  // sum of backend-reported latencies
};

/// Prompts, validates, and re-prompts with the validator's findings up to
/// max_repairs times. The returned plan is always schema-valid.
PlanResult generate_plan(const Frame& frame, const DetectionSet& dets,
                         const screening::PromptTemplate& tmpl, backends::VlmBackend& backend,
                         const PlanOptions& options = {});

/// The JSON document inside a backend reply: the whole reply when it parses,
/// else the first embedded object, else the reply itself.
std::string plan_document_text(const std::string& reply);

}  // namespace infragpt::planning
