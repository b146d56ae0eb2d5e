#include <atomic>
#include <chrono>
#include <semaphore>

#include <httplib.h>

#include "infragpt/backends.hpp"
#include "infragpt/errors.hpp"

namespace infragpt::backends {

namespace {

std::atomic<std::uint64_t> g_http_requests{0};

struct Endpoint {
  std::string scheme_host_port;
  std::string path_prefix;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  const std::string_view name = std::string_view(url).substr(0, scheme);
  if (scheme == std::string::npos || (name != "http" && name != "https") || url.size() == scheme + 3) {
    throw Error(ErrorCode::kConfig, "endpoint '" + url + "' must be an http(s) URL or \"mock\"");
  }
  const auto slash = url.find('/', scheme + 3);
  Endpoint ep;
  ep.scheme_host_port = url.substr(0, slash);
  if (slash != std::string::npos) {
    ep.path_prefix = url.substr(slash);
    while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  }
  return ep;
}

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
  ~SemaphoreGuard() { sem_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

struct PostResult {
  std::string body;
  std::int64_t latency_ms = 0;
};

PostResult post_json(const Endpoint& ep, const std::string& route, const std::string& payload,
                     const HttpOptions& options) {
  httplib::Client client(ep.scheme_host_port);
  client.set_connection_timeout(static_cast<time_t>(options.connect_timeout.count()));
  client.set_read_timeout(static_cast<time_t>(options.read_timeout.count()));
  ++g_http_requests;
  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(ep.path_prefix + route, payload, "application/json");
  const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
  if (!res) {
    throw Error(ErrorCode::kBackendUnavailable,
                ep.scheme_host_port + route + ": " + httplib::to_string(res.error()));
  }
  if (res->status >= 500) {
    throw Error(ErrorCode::kBackendUnavailable,
                ep.scheme_host_port + route + ": HTTP " + std::to_string(res->status));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::kProtocol,
                ep.scheme_host_port + route + ": HTTP " + std::to_string(res->status));
  }
  return {res->body, latency};
}

}  // namespace

std::uint64_t http_request_count() { return g_http_requests.load(); }

struct HttpVlmBackend::Impl {
  Impl(std::string url, HttpOptions opts)
      : endpoint(split_endpoint(url)), options(opts), in_flight(std::max(1, opts.max_in_flight)) {}

  Endpoint endpoint;
  HttpOptions options;
  std::counting_semaphore<> in_flight;
};

HttpVlmBackend::HttpVlmBackend(std::string endpoint, HttpOptions options)
    : impl_(std::make_unique<Impl>(std::move(endpoint), options)) {}

HttpVlmBackend::~HttpVlmBackend() = default;

VlmResponse HttpVlmBackend::generate(const VlmRequest& request, const CallKey&) {
  SemaphoreGuard guard(impl_->in_flight);
  const PostResult r =
      post_json(impl_->endpoint, "/v1/generate", to_json(request).dump(), impl_->options);
  const auto body = nlohmann::json::parse(r.body, nullptr, false);
  if (body.is_discarded() || !body.is_object() || !body.contains("text") ||
      !body.at("text").is_string()) {
    throw Error(ErrorCode::kProtocol, "generate response must be {\"text\": string}");
  }
  return VlmResponse{body.at("text").get<std::string>(), r.latency_ms};
}

struct HttpDetectorBackend::Impl {
  explicit Impl(HttpOptions opts) : options(opts) {}

  std::counting_semaphore<>& slot_for(const std::string& endpoint) {
    std::lock_guard lock(mu);
    auto& sem = semaphores[endpoint];
    if (!sem) sem = std::make_unique<std::counting_semaphore<>>(std::max(1, options.max_in_flight));
    return *sem;
  }

  HttpOptions options;
  std::mutex mu;
  std::map<std::string, std::unique_ptr<std::counting_semaphore<>>> semaphores;
};

HttpDetectorBackend::HttpDetectorBackend(HttpOptions options)
    : impl_(std::make_unique<Impl>(options)) {}

HttpDetectorBackend::~HttpDetectorBackend() = default;

DetectorResponse HttpDetectorBackend::detect(const Frame& frame, const DetectorBinding& binding) {
  const Endpoint ep = split_endpoint(binding.endpoint);
  ordered_json payload;
  payload["image"] = encode_image_file(frame.image_path);
  payload["model"] = binding.model_id;
  payload["conf"] = binding.confidence_floor;
  SemaphoreGuard guard(impl_->slot_for(binding.endpoint));
  const PostResult r = post_json(ep, "/v1/detect", payload.dump(), impl_->options);
  return DetectorResponse{parse_detect_body(std::string_view(r.body)), r.latency_ms};
}

}  // namespace infragpt::backends
