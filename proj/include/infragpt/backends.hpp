#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "infragpt/domain.hpp"

namespace infragpt::backends {

enum class CallKind { kScreen, kPlan, kDetect };

std::string_view to_string(CallKind kind);

// Identifies one pipeline call. Live clients ignore it; the scripted
// backend looks responses up by it.
struct CallKey {
  std::string frame_id;
  CallKind kind = CallKind::kScreen;
};

struct VlmRequest {
  std::string model;
  std::string prompt;
  std::vector<std::string> images;  // base64 of the image file bytes
  int max_tokens = 1024;
  double temperature = 0.0;
};

/// Wire body for POST {endpoint}/v1/generate.
ordered_json to_json(const VlmRequest& request);

struct VlmResponse {
  std::string text;
  std::int64_t latency_ms = 0;
};

struct DetectorBinding {
  std::string model_id;
  std::string endpoint;  // URL, or "mock"
  std::vector<std::string> classes;
  double confidence_floor = 0.25;

  bool is_mock() const { return endpoint == "mock"; }
  bool operator==(const DetectorBinding&) const = default;
};

void check_binding(const DetectorBinding& binding);
DetectorBinding binding_from_json(const nlohmann::json& j);

// One detection exactly as it appears on the wire (center format).
struct WireDetection {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  std::string class_label;
  double conf = 0.0;
};

struct DetectorResponse {
  std::vector<WireDetection> detections;
  std::int64_t latency_ms = 0;
};

/// Parses {"detections": [{"cx","cy","w","h","class","conf"}, ...]}.
/// Throws kProtocol on any shape error.
std::vector<WireDetection> parse_detect_body(const nlohmann::json& body);
std::vector<WireDetection> parse_detect_body(std::string_view body);

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{200};

  static RetryPolicy live() { return {3, std::chrono::milliseconds(200)}; }
  static RetryPolicy deterministic() { return {3, std::chrono::milliseconds(0)}; }
};

class VlmBackend {
 public:
  virtual ~VlmBackend() = default;
  // One attempt. Throws kBackendUnavailable (retriable) or kProtocol.
  virtual VlmResponse generate(const VlmRequest& request, const CallKey& key) = 0;
};

class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;
  // One attempt. Throws kBackendUnavailable (retriable) or kProtocol.
  virtual DetectorResponse detect(const Frame& frame, const DetectorBinding& binding) = 0;
};

/// Validates the request, then calls the backend with bounded retries on
/// kBackendUnavailable. Latency is the one the backend reports.
VlmResponse vlm_generate(const VlmRequest& request, VlmBackend& backend,
                         const CallKey& key, const RetryPolicy& policy = RetryPolicy::live());

/// Runs one detector and normalizes its output: wire boxes are converted to
/// corner format and clamped to the frame, detections under the binding's
/// confidence floor are dropped, and the result is sorted deterministically.
/// An unknown class or malformed box is a kProtocol error.
DetectionSet detect(const Frame& frame, const DetectorBinding& binding,
                    DetectorBackend& backend, const RetryPolicy& policy = RetryPolicy::live(),
                    std::int64_t* latency_ms = nullptr);

std::string base64_encode(std::string_view bytes);

/// Reads an image file and returns its base64 payload. Throws kIo.
std::string encode_image_file(const std::filesystem::path& path);

/// Number of HTTP requests attempted by live clients in this process.
std::uint64_t http_request_count();

struct HttpOptions {
  std::chrono::seconds connect_timeout{5};
  std::chrono::seconds read_timeout{120};
  int max_in_flight = 4;  // per endpoint
};

class HttpVlmBackend final : public VlmBackend {
 public:
  explicit HttpVlmBackend(std::string endpoint, HttpOptions options = {});
  ~HttpVlmBackend() override;

  VlmResponse generate(const VlmRequest& request, const CallKey& key) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class HttpDetectorBackend final : public DetectorBackend {
 public:
  explicit HttpDetectorBackend(HttpOptions options = {});
  ~HttpDetectorBackend() override;

  DetectorResponse detect(const Frame& frame, const DetectorBinding& binding) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Deterministic stand-in for both services, driven by a JSON map from
/// "<frame_id>/<kind>" to a response. A detect lookup first tries
/// "<frame_id>/detect/<model_id>". Entry forms:
///   "text"                         screen/plan text, or a detect body
///   {...}                          serialized as text, or a detect body
///   {"$error": "unavailable"|"protocol"}
///   {"$body": <entry>, "$latency_ms": n}
///   [e0, e1, ...]                  consumed in order, one per call
/// A missing key or an exhausted sequence throws kScriptMissing.
class ScriptedBackend final : public VlmBackend, public DetectorBackend {
 public:
  ScriptedBackend() = default;
  explicit ScriptedBackend(const nlohmann::json& script);

  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  void set(const std::string& key, nlohmann::json entry);

  VlmResponse generate(const VlmRequest& request, const CallKey& key) override;
  DetectorResponse detect(const Frame& frame, const DetectorBinding& binding) override;

  std::size_t call_count(std::string_view frame_id, CallKind kind) const;
  std::size_t total_calls(CallKind kind) const;

 private:
  struct Entry {
    std::vector<nlohmann::json> responses;
    bool sequence = false;
    std::size_t next = 0;
  };

  nlohmann::json take(const std::string& key, const std::string& fallback_key);
  void count(std::string_view frame_id, CallKind kind);

  mutable std::mutex mu_;
  std::unordered_map<std::string, Entry> script_;
  std::unordered_map<std::string, std::size_t> calls_;
  std::map<CallKind, std::size_t> totals_;
};

}  // namespace infragpt::backends
