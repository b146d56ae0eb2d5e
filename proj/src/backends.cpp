#include "infragpt/backends.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <thread>

#include "infragpt/errors.hpp"

namespace infragpt::backends {

using nlohmann::json;

std::string_view to_string(CallKind kind) {
  switch (kind) {
    case CallKind::kScreen: return "screen";
    case CallKind::kPlan: return "plan";
    case CallKind::kDetect: return "detect";
  }
  return "screen";
}

ordered_json to_json(const VlmRequest& request) {
  ordered_json j;
  j["model"] = request.model;
  j["prompt"] = request.prompt;
  j["images"] = request.images;
  j["max_tokens"] = request.max_tokens;
  j["temperature"] = request.temperature;
  return j;
}

void check_binding(const DetectorBinding& binding) {
  if (binding.model_id.empty()) {
    throw Error(ErrorCode::kConfig, "detector binding needs a model_id");
  }
  if (binding.endpoint.empty()) {
    throw Error(ErrorCode::kConfig, "detector " + binding.model_id + " has no endpoint");
  }
  if (binding.classes.empty()) {
    throw Error(ErrorCode::kConfig, "detector " + binding.model_id + " lists no classes");
  }
  if (!(binding.confidence_floor >= 0.0 && binding.confidence_floor <= 1.0)) {
    throw Error(ErrorCode::kConfig,
                "detector " + binding.model_id + " confidence_floor outside [0, 1]");
  }
}

DetectorBinding binding_from_json(const json& j) {
  DetectorBinding b;
  try {
    b.model_id = j.at("model_id").get<std::string>();
    b.endpoint = j.at("endpoint").get<std::string>();
    b.classes = j.at("classes").get<std::vector<std::string>>();
    b.confidence_floor = j.value("confidence_floor", 0.25);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad detector binding: ") + e.what());
  }
  check_binding(b);
  return b;
}

std::vector<WireDetection> parse_detect_body(const json& body) {
  if (!body.is_object() || !body.contains("detections") || !body.at("detections").is_array()) {
    throw Error(ErrorCode::kProtocol, "detect response must be {\"detections\": [...]}");
  }
  std::vector<WireDetection> out;
  for (const auto& d : body.at("detections")) {
    auto num = [&](const char* key) {
      if (!d.is_object() || !d.contains(key) || !d.at(key).is_number()) {
        throw Error(ErrorCode::kProtocol,
                    std::string("detection field '") + key + "' missing or not a number");
      }
      return d.at(key).get<double>();
    };
    WireDetection w;
    w.cx = num("cx");
    w.cy = num("cy");
    w.w = num("w");
    w.h = num("h");
    w.conf = num("conf");
    if (!d.contains("class") || !d.at("class").is_string()) {
      throw Error(ErrorCode::kProtocol, "detection field 'class' missing or not a string");
    }
    w.class_label = d.at("class").get<std::string>();
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<WireDetection> parse_detect_body(std::string_view body) {
  json parsed = json::parse(body, nullptr, false);
  if (parsed.is_discarded()) {
    throw Error(ErrorCode::kProtocol, "detect response body is not JSON");
  }
  return parse_detect_body(parsed);
}

namespace {

template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) {
  const int attempts = std::max(1, policy.attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kBackendUnavailable) throw;
      if (attempt >= attempts) {
        throw Error(ErrorCode::kBackendUnavailable,
                    std::string(e.what()) + " (after " + std::to_string(attempts) +
                        " attempts)");
      }
    }
    if (policy.backoff.count() > 0) std::this_thread::sleep_for(policy.backoff);
  }
}

}  // namespace

VlmResponse vlm_generate(const VlmRequest& request, VlmBackend& backend, const CallKey& key,
                         const RetryPolicy& policy) {
  if (request.prompt.empty()) {
    throw Error(ErrorCode::kPrecondition, "VLM request has an empty prompt");
  }
  if (request.max_tokens <= 0) {
    throw Error(ErrorCode::kPrecondition, "VLM request max_tokens must be positive");
  }
  if (!(request.temperature >= 0.0)) {
    throw Error(ErrorCode::kPrecondition, "VLM request temperature must be >= 0");
  }
  return with_retries(policy, [&] { return backend.generate(request, key); });
}

DetectionSet detect(const Frame& frame, const DetectorBinding& binding,
                    DetectorBackend& backend, const RetryPolicy& policy,
                    std::int64_t* latency_ms) {
  check_binding(binding);
  const DetectorResponse response =
      with_retries(policy, [&] { return backend.detect(frame, binding); });
  if (latency_ms) *latency_ms = response.latency_ms;

  DetectionSet out;
  for (const WireDetection& w : response.detections) {
    if (std::find(binding.classes.begin(), binding.classes.end(), w.class_label) ==
        binding.classes.end()) {
      throw Error(ErrorCode::kProtocol, "detector " + binding.model_id +
                                            " returned unknown class '" + w.class_label + "'");
    }
    if (!(w.conf >= 0.0 && w.conf <= 1.0)) {
      throw Error(ErrorCode::kProtocol,
                  "detector " + binding.model_id + " returned confidence outside [0, 1]");
    }
    if (w.conf < binding.confidence_floor) continue;
    BBox box;
    try {
      box = bbox_from_center(w.cx, w.cy, w.w, w.h);
    } catch (const Error& e) {
      throw Error(ErrorCode::kProtocol,
                  "detector " + binding.model_id + " returned a bad box: " + e.what());
    }
    out.push_back(Detection{bbox_clamp(box, frame), w.class_label, w.conf, binding.model_id});
  }
  sort_detections(out);
  return out;
}

std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                   (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                   static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(kAlphabet[(n >> 18) & 63]);
    out.push_back(kAlphabet[(n >> 12) & 63]);
    out.push_back(kAlphabet[(n >> 6) & 63]);
    out.push_back(kAlphabet[n & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t n = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16;
    if (rest == 2) n |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8;
    out.push_back(kAlphabet[(n >> 18) & 63]);
    out.push_back(kAlphabet[(n >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(n >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::string encode_image_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read image " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return base64_encode(bytes);
}

// --- scripted -------------------------------------------------------------

ScriptedBackend::ScriptedBackend(const json& script) {
  if (!script.is_object()) {
    throw Error(ErrorCode::kConfig, "scripted backend fixture must be a JSON object");
  }
  for (const auto& [key, value] : script.items()) set(key, value);
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot read script " + path.string());
  json parsed = json::parse(in, nullptr, false);
  if (parsed.is_discarded()) {
    throw Error(ErrorCode::kConfig, "script " + path.string() + " is not valid JSON");
  }
  return std::make_shared<ScriptedBackend>(parsed);
}

void ScriptedBackend::set(const std::string& key, json entry) {
  Entry e;
  if (entry.is_array()) {
    e.sequence = true;
    for (auto& r : entry) e.responses.push_back(std::move(r));
  } else {
    e.responses.push_back(std::move(entry));
  }
  std::lock_guard lock(mu_);
  script_[key] = std::move(e);
}

json ScriptedBackend::take(const std::string& key, const std::string& fallback_key) {
  std::lock_guard lock(mu_);
  auto it = script_.find(key);
  if (it == script_.end() && !fallback_key.empty()) it = script_.find(fallback_key);
  if (it == script_.end()) {
    throw Error(ErrorCode::kScriptMissing, "no scripted response for '" + key + "'");
  }
  Entry& e = it->second;
  if (!e.sequence) return e.responses.front();
  if (e.next >= e.responses.size()) {
    throw Error(ErrorCode::kScriptMissing, "scripted sequence '" + it->first + "' exhausted");
  }
  return e.responses[e.next++];
}

void ScriptedBackend::count(std::string_view frame_id, CallKind kind) {
  std::lock_guard lock(mu_);
  ++calls_[std::string(frame_id) + "/" + std::string(to_string(kind))];
  ++totals_[kind];
}

std::size_t ScriptedBackend::call_count(std::string_view frame_id, CallKind kind) const {
  std::lock_guard lock(mu_);
  auto it = calls_.find(std::string(frame_id) + "/" + std::string(to_string(kind)));
  return it == calls_.end() ? 0 : it->second;
}

std::size_t ScriptedBackend::total_calls(CallKind kind) const {
  std::lock_guard lock(mu_);
  auto it = totals_.find(kind);
  return it == totals_.end() ? 0 : it->second;
}

namespace {

// Strips the $error / $body / $latency_ms wrapper.
json unwrap(const json& entry, std::int64_t& latency_ms) {
  if (entry.is_object() && entry.contains("$error")) {
    const std::string kind = entry.at("$error").is_string() ? entry.at("$error").get<std::string>() : "";
    if (kind == "protocol") throw Error(ErrorCode::kProtocol, "scripted protocol error");
    throw Error(ErrorCode::kBackendUnavailable, "scripted backend unavailable");
  }
  if (entry.is_object() && entry.contains("$body")) {
    latency_ms = entry.value("$latency_ms", std::int64_t{0});
    return entry.at("$body");
  }
  return entry;
}

}  // namespace

VlmResponse ScriptedBackend::generate(const VlmRequest&, const CallKey& key) {
  count(key.frame_id, key.kind);
  const std::string k = key.frame_id + "/" + std::string(to_string(key.kind));
  VlmResponse response;
  const json body = unwrap(take(k, ""), response.latency_ms);
  response.text = body.is_string() ? body.get<std::string>() : body.dump();
  return response;
}

DetectorResponse ScriptedBackend::detect(const Frame& frame, const DetectorBinding& binding) {
  count(frame.frame_id, CallKind::kDetect);
  const std::string base = frame.frame_id + "/detect";
  DetectorResponse response;
  const json body = unwrap(take(base + "/" + binding.model_id, base), response.latency_ms);
  response.detections =
      body.is_string() ? parse_detect_body(std::string_view(body.get_ref<const std::string&>())) : parse_detect_body(body);
  return response;
}

}  // namespace infragpt::backends
