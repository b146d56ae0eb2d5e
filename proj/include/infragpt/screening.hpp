#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "infragpt/backends.hpp"
#include "infragpt/domain.hpp"

namespace infragpt::screening {

// Text with {name} placeholders. Stored on disk with a first line
// "version: <string>" followed by the body.
struct PromptTemplate {
  std::string name;
  std::string body;
  std::string version;
};

PromptTemplate parse_template(std::string name, std::string_view file_text);
PromptTemplate load_template(const std::filesystem::path& path);

PromptTemplate default_screening_template();
PromptTemplate default_planning_template();

/// Placeholder names in order of first appearance.
std::vector<std::string> placeholders(const PromptTemplate& tmpl);

/// Substitutes every placeholder. Throws kTemplate if the body uses a
/// placeholder outside `values`, or omits one listed in `required`.
std::string render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values,
                   const std::set<std::string>& required = {});

std::string build_screening_prompt(const PromptTemplate& tmpl, const Frame& frame);

/// Two-tier parse of a screening reply. Tier 1 takes the first embedded
/// JSON object carrying crack/leak/other flags; tier 2 scans keywords with a
/// three-token negation window. Throws kScreenParse if neither applies.
DecisionVector parse_decision(std::string_view text);

struct ScreenOptions {
  std::string model = "vlm";
  int max_tokens = 256;
  double temperature = 0.0;
  backends::RetryPolicy retry = backends::RetryPolicy::live();
};

struct ScreenResult {
  DecisionVector decision;
  std::int64_t latency_ms = 0;  // as reported by the backend
  std::string raw_text;
  std::optional<std::string> warning;  // set when the reply did not parse
};

/// Propagates kBackendUnavailable / kProtocol; parse failures degrade to an
/// all-zero decision with a warning.
ScreenResult screen(const Frame& frame, const PromptTemplate& tmpl, backends::VlmBackend& backend,
                    const ScreenOptions& options = {});

}  // namespace infragpt::screening
