#include "infragpt/screening.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <iterator>

#include <spdlog/spdlog.h>

#include "infragpt/assets.hpp"
#include "infragpt/errors.hpp"
#include "infragpt/metrics.hpp"
#include "infragpt/schema.hpp"

namespace infragpt::screening {

namespace {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Length of a placeholder starting at body[i] == '{', or 0 if none.
std::size_t placeholder_at(std::string_view body, std::size_t i) {
  if (i + 2 >= body.size() || !is_ident_start(body[i + 1])) return 0;
  std::size_t j = i + 2;
  while (j < body.size() && is_ident_char(body[j])) ++j;
  if (j < body.size() && body[j] == '}') return j - i + 1;
  return 0;
}

}  // namespace

PromptTemplate parse_template(std::string name, std::string_view file_text) {
  constexpr std::string_view kPrefix = "version:";
  const auto eol = file_text.find('\n');
  const std::string_view first = file_text.substr(0, eol);
  if (first.substr(0, kPrefix.size()) != kPrefix) {
    throw Error(ErrorCode::kTemplate,
                "template " + name + " must start with a 'version: <string>' line");
  }
  PromptTemplate t;
  t.name = std::move(name);
  std::string_view version = first.substr(kPrefix.size());
  while (!version.empty() && std::isspace(static_cast<unsigned char>(version.front())))
    version.remove_prefix(1);
  while (!version.empty() && std::isspace(static_cast<unsigned char>(version.back())))
    version.remove_suffix(1);
  t.version = std::string(version);
  t.body = eol == std::string_view::npos ? std::string{} : std::string(file_text.substr(eol + 1));
  if (t.version.empty()) throw Error(ErrorCode::kTemplate, "template " + t.name + " has an empty version");
  if (t.body.empty()) throw Error(ErrorCode::kTemplate, "template " + t.name + " has an empty body");
  return t;
}

PromptTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfig, "cannot read template " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_template(path.stem().string(), text);
}

PromptTemplate default_screening_template() {
  return parse_template("screening", assets::screening_prompt());
}

PromptTemplate default_planning_template() {
  return parse_template("planning", assets::planning_prompt());
}

std::vector<std::string> placeholders(const PromptTemplate& tmpl) {
  std::vector<std::string> names;
  const std::string_view body = tmpl.body;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{') continue;
    if (const std::size_t len = placeholder_at(body, i)) {
      std::string name(body.substr(i + 1, len - 2));
      if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
      i += len - 1;
    }
  }
  return names;
}

std::string render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values,
                   const std::set<std::string>& required) {
  if (tmpl.body.empty()) throw Error(ErrorCode::kTemplate, "template " + tmpl.name + " is empty");
  for (const auto& name : required) {
    const auto present = placeholders(tmpl);
    if (std::find(present.begin(), present.end(), name) == present.end()) {
      throw Error(ErrorCode::kTemplate,
                  "template " + tmpl.name + " must contain the {" + name + "} placeholder");
    }
  }
  std::string out;
  const std::string_view body = tmpl.body;
  out.reserve(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] == '{') {
      if (const std::size_t len = placeholder_at(body, i)) {
        const std::string name(body.substr(i + 1, len - 2));
        auto it = values.find(name);
        if (it == values.end()) {
          throw Error(ErrorCode::kTemplate,
                      "template " + tmpl.name + " uses unknown placeholder {" + name + "}");
        }
        out += it->second;
        i += len - 1;
        continue;
      }
    }
    out.push_back(body[i]);
  }
  return out;
}

std::string build_screening_prompt(const PromptTemplate& tmpl, const Frame& frame) {
  return render(tmpl, {{"source_id", frame.source_id},
                       {"timestamp", std::to_string(frame.timestamp)}});
}

namespace {

std::optional<bool> flag_of(const nlohmann::json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer() || v.is_number_unsigned()) {
    const auto n = v.get<std::int64_t>();
    if (n == 0 || n == 1) return n == 1;
  }
  return std::nullopt;
}

bool has_flags(const nlohmann::json& obj) {
  for (const char* key : {"crack", "leak", "other"}) {
    if (!obj.contains(key) || !flag_of(obj.at(key))) return false;
  }
  return true;
}

bool negated(const std::vector<std::string>& tokens, std::size_t at) {
  static constexpr std::array<std::string_view, 4> kNegations = {"no", "not", "none", "without"};
  const std::size_t from = at >= 3 ? at - 3 : 0;
  for (std::size_t k = from; k < at; ++k) {
    if (std::find(kNegations.begin(), kNegations.end(), tokens[k]) != kNegations.end()) return true;
  }
  return false;
}

// Inflected forms count ("cracks", "leaking").
bool mentions(const std::vector<std::string>& tokens, std::string_view stem) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].rfind(stem, 0) == 0 && !negated(tokens, i)) return true;
  }
  return false;
}

}  // namespace

DecisionVector parse_decision(std::string_view text) {
  if (auto obj = schema::find_json_object(text, has_flags)) {
    return DecisionVector{*flag_of(obj->at("crack")), *flag_of(obj->at("leak")),
                          *flag_of(obj->at("other"))};
  }
  const auto tokens = metrics::tokenize(text);
  if (tokens.empty()) {
    throw Error(ErrorCode::kScreenParse, "screening reply has no usable content");
  }
  return DecisionVector{mentions(tokens, "crack"), mentions(tokens, "leak"), false};
}

ScreenResult screen(const Frame& frame, const PromptTemplate& tmpl, backends::VlmBackend& backend,
                    const ScreenOptions& options) {
  backends::VlmRequest request;
  request.model = options.model;
  request.prompt = build_screening_prompt(tmpl, frame);
  request.images.push_back(backends::encode_image_file(frame.image_path));
  request.max_tokens = options.max_tokens;
  request.temperature = options.temperature;

  const backends::VlmResponse response = backends::vlm_generate(
      request, backend, {frame.frame_id, backends::CallKind::kScreen}, options.retry);

  ScreenResult result;
  result.latency_ms = response.latency_ms;
  result.raw_text = response.text;
  try {
    result.decision = parse_decision(response.text);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kScreenParse) throw;
    result.decision = {};
    result.warning = std::string("screen-parse: ") + e.what() + "; treated as no defects";
    spdlog::warn("frame {}: {}", frame.frame_id, *result.warning);
  }
  return result;
}

}  // namespace infragpt::screening
