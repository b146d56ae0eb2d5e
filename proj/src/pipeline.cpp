#include "infragpt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "infragpt/errors.hpp"
#include "infragpt/schema.hpp"

namespace infragpt::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

[[noreturn]] void config_error(const std::string& message) {
  throw Error(ErrorCode::kConfig, message);
}

fs::path resolve(const fs::path& base_dir, const std::string& value) {
  fs::path p(value);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

template <typename T>
T get_field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(std::string("config field '") + key + "' has the wrong type");
  }
}

std::int64_t to_ms(Clock::duration d) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(d).count();
}

}  // namespace

void check_config(const PipelineConfig& c) {
  detection::check_registry(c.detectors);
  if (c.concurrency_limit < 1) config_error("concurrency_limit must be >= 1");
  if (c.endpoint_concurrency < 1) config_error("endpoint_concurrency must be >= 1");
  if (c.max_repairs < 0) config_error("max_repairs must be >= 0");
  if (c.max_tokens <= 0 || c.screen_max_tokens <= 0) config_error("max_tokens must be positive");
  if (!(c.temperature >= 0.0)) config_error("temperature must be >= 0");
  if (c.poll_interval.count() <= 0) config_error("poll_interval_ms must be positive");
  if (c.vlm_model.empty()) config_error("vlm_model must be non-empty");
  for (const auto& [source, ppm] : c.pixels_per_meter) {
    if (!(ppm > 0.0)) config_error("pixels_per_meter for '" + source + "' must be positive");
  }
  const bool any_mock = c.vlm_endpoint == "mock" || c.detectors.crack.is_mock() ||
                        c.detectors.leak.is_mock() || c.detectors.other.is_mock();
  if (any_mock && !c.script) config_error("a \"mock\" endpoint needs a script file");
  for (const auto* p : {&c.script, &c.screening_template, &c.planning_template, &c.fallback_table}) {
    if (*p && !fs::is_regular_file(**p)) config_error("referenced file " + (*p)->string() + " does not exist");
  }
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  static const std::set<std::string> kKeys = {
      "vlm_endpoint", "vlm_model", "script", "detectors", "templates", "fallback_table",
      "max_repairs", "concurrency_limit", "endpoint_concurrency", "deterministic",
      "output_path", "mode", "poll_interval_ms", "pixels_per_meter", "max_tokens",
      "screen_max_tokens", "temperature"};
  if (!j.is_object()) config_error("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.count(key)) config_error("unknown config field '" + key + "'");
  }
  if (!j.contains("detectors")) config_error("config field 'detectors' is required");

  PipelineConfig c;
  if (j.contains("vlm_endpoint")) c.vlm_endpoint = get_field<std::string>(j, "vlm_endpoint");
  if (j.contains("vlm_model")) c.vlm_model = get_field<std::string>(j, "vlm_model");
  if (j.contains("script")) c.script = resolve(base_dir, get_field<std::string>(j, "script"));
  c.detectors = detection::registry_from_json(j.at("detectors"));
  if (j.contains("templates")) {
    const auto& t = j.at("templates");
    if (!t.is_object()) config_error("config field 'templates' must be an object");
    for (const auto& [key, _] : t.items()) {
      if (key != "screening" && key != "planning") config_error("unknown template '" + key + "'");
    }
    if (t.contains("screening")) c.screening_template = resolve(base_dir, get_field<std::string>(t, "screening"));
    if (t.contains("planning")) c.planning_template = resolve(base_dir, get_field<std::string>(t, "planning"));
  }
  if (j.contains("fallback_table")) {
    c.fallback_table = resolve(base_dir, get_field<std::string>(j, "fallback_table"));
  }
  if (j.contains("max_repairs")) c.max_repairs = get_field<int>(j, "max_repairs");
  if (j.contains("concurrency_limit")) c.concurrency_limit = get_field<int>(j, "concurrency_limit");
  if (j.contains("endpoint_concurrency")) c.endpoint_concurrency = get_field<int>(j, "endpoint_concurrency");
  if (j.contains("deterministic")) c.deterministic = get_field<bool>(j, "deterministic");
  if (j.contains("output_path")) c.output_path = resolve(base_dir, get_field<std::string>(j, "output_path"));
  if (j.contains("mode")) {
    const auto mode = get_field<std::string>(j, "mode");
    if (mode == "batch") {
      c.mode = Mode::kBatch;
    } else if (mode == "watch") {
      c.mode = Mode::kWatch;
    } else {
      config_error("mode must be \"batch\" or \"watch\"");
    }
  }
  if (j.contains("poll_interval_ms")) {
    c.poll_interval = std::chrono::milliseconds(get_field<std::int64_t>(j, "poll_interval_ms"));
  }
  if (j.contains("pixels_per_meter")) {
    c.pixels_per_meter = get_field<std::map<std::string, double>>(j, "pixels_per_meter");
  }
  if (j.contains("max_tokens")) c.max_tokens = get_field<int>(j, "max_tokens");
  if (j.contains("screen_max_tokens")) c.screen_max_tokens = get_field<int>(j, "screen_max_tokens");
  if (j.contains("temperature")) c.temperature = get_field<double>(j, "temperature");
  check_config(c);
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot read config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) config_error("config " + path.string() + " is not valid JSON");
  return config_from_json(j, path.parent_path());
}

std::pair<int, int> probe_image_size(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read image " + path.string());
  auto byte = [&]() -> int {
    const int c = in.get();
    if (c == EOF) throw Error(ErrorCode::kIo, "truncated image header in " + path.string());
    return c;
  };
  auto be16 = [&] {
    const int hi = byte();
    return (hi << 8) | byte();
  };
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  static constexpr unsigned char kPng[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (in.gcount() == 8 && std::equal(sig, sig + 8, kPng)) {
    in.seekg(16);
    const int w = (be16() << 16) | be16();
    const int h = (be16() << 16) | be16();
    return {w, h};
  }
  if (in.gcount() >= 2 && sig[0] == 0xFF && sig[1] == 0xD8) {
    in.clear();
    in.seekg(2);
    for (;;) {
      int marker = byte();
      if (marker != 0xFF) break;
      while (marker == 0xFF) marker = byte();
      if ((marker >= 0xD0 && marker <= 0xD7) || marker == 0x01) continue;
      const int length = be16();
      const bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 &&
                       marker != 0xCC;
      if (sof) {
        byte();  // sample precision
        const int h = be16();
        const int w = be16();
        return {w, h};
      }
      in.seekg(length - 2, std::ios::cur);
    }
  }
  throw Error(ErrorCode::kIo, "cannot determine image size of " + path.string() +
                                  " (only PNG and JPEG headers are probed)");
}

Frame manifest_entry(const json& j, const fs::path& base_dir, bool deterministic) {
  if (!j.is_object()) config_error("manifest line must be a JSON object");
  Frame f;
  try {
    f.frame_id = j.at("frame_id").get<std::string>();
    const char* path_key = j.contains("path") ? "path" : "image_path";
    f.image_path = resolve(base_dir, j.at(path_key).get<std::string>()).string();
    f.source_id = j.value("source_id", std::string{});
    if (j.contains("timestamp")) {
      f.timestamp = j.at("timestamp").get<std::int64_t>();
    } else if (deterministic) {
      config_error("frame '" + f.frame_id + "' has no timestamp (required in deterministic mode)");
    } else {
      f.timestamp = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    }
    if (j.contains("location") && !j.at("location").is_null()) {
      const auto& loc = j.at("location");
      if (loc.is_array() && loc.size() == 2) {
        f.location = GeoLocation{loc[0].get<double>(), loc[1].get<double>()};
      } else {
        f.location = GeoLocation{loc.at("lat").get<double>(), loc.at("lon").get<double>()};
      }
    }
    if (j.contains("width") && j.contains("height")) {
      f.width_px = j.at("width").get<int>();
      f.height_px = j.at("height").get<int>();
    }
  } catch (const json::exception& e) {
    config_error(std::string("bad manifest line: ") + e.what());
  }
  if (f.width_px == 0 && f.height_px == 0) {
    try {
      std::tie(f.width_px, f.height_px) = probe_image_size(f.image_path);
    } catch (const Error& e) {
      config_error("frame '" + f.frame_id + "': " + e.what());
    }
  }
  try {
    check_frame(f);
  } catch (const Error& e) {
    config_error("frame '" + f.frame_id + "': " + e.what());
  }
  return f;
}

std::vector<Frame> load_manifest(const fs::path& path, bool deterministic) {
  std::ifstream in(path);
  if (!in) config_error("cannot read manifest " + path.string());
  std::vector<Frame> frames;
  std::set<std::string> ids;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      config_error(path.string() + ":" + std::to_string(lineno) + ": not valid JSON");
    }
    Frame f = manifest_entry(j, path.parent_path(), deterministic);
    if (!ids.insert(f.frame_id).second) {
      config_error(path.string() + ":" + std::to_string(lineno) + ": duplicate frame_id '" +
                   f.frame_id + "'");
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

namespace {

// Sends "mock" bindings to the scripted backend and the rest over HTTP.
class RoutingDetector final : public backends::DetectorBackend {
 public:
  RoutingDetector(std::shared_ptr<backends::DetectorBackend> scripted,
                  std::shared_ptr<backends::DetectorBackend> http)
      : scripted_(std::move(scripted)), http_(std::move(http)) {}

  backends::DetectorResponse detect(const Frame& frame,
                                    const backends::DetectorBinding& binding) override {
    auto& target = binding.is_mock() ? scripted_ : http_;
    if (!target) config_error("no backend available for detector " + binding.model_id);
    return target->detect(frame, binding);
  }

 private:
  std::shared_ptr<backends::DetectorBackend> scripted_;
  std::shared_ptr<backends::DetectorBackend> http_;
};

}  // namespace

Backends make_backends(const PipelineConfig& config) {
  Backends b;
  if (config.script) b.scripted = backends::ScriptedBackend::from_file(*config.script);
  backends::HttpOptions http;
  http.max_in_flight = config.endpoint_concurrency;

  if (config.vlm_endpoint == "mock") {
    if (!b.scripted) config_error("vlm_endpoint \"mock\" needs a script file");
    b.vlm = b.scripted;
  } else {
    b.vlm = std::make_shared<backends::HttpVlmBackend>(config.vlm_endpoint, http);
  }

  const auto& d = config.detectors;
  const bool any_live = !d.crack.is_mock() || !d.leak.is_mock() || !d.other.is_mock();
  std::shared_ptr<backends::DetectorBackend> live;
  if (any_live) live = std::make_shared<backends::HttpDetectorBackend>(http);
  b.detector = std::make_shared<RoutingDetector>(b.scripted, live);
  return b;
}

Runtime make_runtime(PipelineConfig config, Backends backends) {
  check_config(config);
  Runtime rt{.config = std::move(config),
             .screening_template = {},
             .planning_template = {},
             .fallback = planning::FallbackTable::defaults(),
             .backends = std::move(backends),
             .retry = {}};
  const auto& c = rt.config;
  rt.screening_template = c.screening_template ? screening::load_template(*c.screening_template)
                                               : screening::default_screening_template();
  rt.planning_template = c.planning_template ? screening::load_template(*c.planning_template)
                                             : screening::default_planning_template();
  if (c.fallback_table) rt.fallback = planning::FallbackTable::load(*c.fallback_table);
  rt.retry = c.deterministic ? backends::RetryPolicy::deterministic() : backends::RetryPolicy::live();
  return rt;
}

Runtime make_runtime(PipelineConfig config) {
  check_config(config);
  Backends b = make_backends(config);
  return make_runtime(std::move(config), std::move(b));
}

namespace {

bool recoverable(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kBackendUnavailable:
    case ErrorCode::kProtocol:
    case ErrorCode::kIo:
      return true;
    default:
      return false;
  }
}

AttemptSummary summarize_attempt(const planning::PlanAttempt& a) {
  AttemptSummary s{a.attempt_index, a.accepted, {}};
  for (const auto& v : a.validation.violations) {
    s.violations.push_back(v.path + ": " + v.rule + ": " + v.message);
  }
  return s;
}

}  // namespace

FrameOutcome process_frame(const Frame& frame, const Runtime& rt) {
  const auto& cfg = rt.config;
  const auto start = Clock::now();
  FrameOutcome out;
  PipelineRecord& rec = out.record;
  rec.frame_id = frame.frame_id;
  StageLatencies reported;

  auto finish = [&] {
    out.wall = Clock::now() - start;
    out.backend_ms = reported.screen + reported.detect + reported.plan;
    if (cfg.deterministic) {
      reported.total = out.backend_ms;
      rec.latencies_ms = reported;
    } else {
      rec.latencies_ms.total = to_ms(out.wall);
    }
    return std::move(out);
  };

  // Initial semantic analysis.
  auto t0 = Clock::now();
  try {
    screening::ScreenOptions opts;
    opts.model = cfg.vlm_model;
    opts.max_tokens = cfg.screen_max_tokens;
    opts.temperature = cfg.temperature;
    opts.retry = rt.retry;
    screening::ScreenResult s = screening::screen(frame, rt.screening_template, *rt.backends.vlm, opts);
    rec.decision = s.decision;
    reported.screen = s.latency_ms;
    if (s.warning) rec.warnings.push_back(*s.warning);
  } catch (const Error& e) {
    if (!recoverable(e)) throw;
    rec.status = RecordStatus::kScreenFailed;
    rec.warnings.push_back(std::string("screen: ") + e.what());
    rec.latencies_ms.screen = to_ms(Clock::now() - t0);
    return finish();
  }
  rec.latencies_ms.screen = to_ms(Clock::now() - t0);

  if (!rec.decision.any()) {
    rec.status = RecordStatus::kNoDefects;
    return finish();
  }

  // Localized detection.
  t0 = Clock::now();
  try {
    const auto bindings = detection::select_detectors(rec.decision, cfg.detectors);
    detection::DetectionRun run = detection::run_detection(frame, bindings, cfg.detectors.merge_iou,
                                                           *rt.backends.detector, rt.retry);
    rec.detections = std::move(run.detections);
    reported.detect = run.latency_ms;
  } catch (const Error& e) {
    if (!recoverable(e)) throw;
    rec.status = RecordStatus::kDetectionFailed;
    rec.warnings.push_back(std::string("detect: ") + e.what());
    rec.latencies_ms.detect = to_ms(Clock::now() - t0);
    return finish();
  }
  rec.latencies_ms.detect = to_ms(Clock::now() - t0);

  if (rec.detections.empty()) {
    rec.status = RecordStatus::kPlanned;
    rec.plan = MaintenancePlan{};
    rec.warnings.push_back("detectors found nothing; planner skipped");
    return finish();
  }

  // Structured reasoning.
  t0 = Clock::now();
  planning::PlanOptions popts;
  popts.model = cfg.vlm_model;
  popts.max_tokens = cfg.max_tokens;
  popts.temperature = cfg.temperature;
  popts.max_repairs = cfg.max_repairs;
  popts.retry = rt.retry;
  popts.fallback = &rt.fallback;
  if (auto it = cfg.pixels_per_meter.find(frame.source_id); it != cfg.pixels_per_meter.end()) {
    popts.pixels_per_meter = it->second;
  }
  planning::PlanResult result;
  try {
    result = planning::generate_plan(frame, rec.detections, rt.planning_template,
                                     *rt.backends.vlm, popts);
  } catch (const Error& e) {
    if (!recoverable(e)) throw;
    rec.status = RecordStatus::kPlanFailed;
    rec.warnings.push_back(std::string("plan: ") + e.what());
    rec.latencies_ms.plan = to_ms(Clock::now() - t0);
    return finish();
  }
  rec.latencies_ms.plan = to_ms(Clock::now() - t0);
  reported.plan = result.latency_ms;
  for (const auto& a : result.attempts) {
    rec.plan_attempts.push_back(summarize_attempt(a));
    ++out.plan_documents;
    if (a.accepted) ++out.valid_plan_documents;
  }
  rec.plan = std::move(result.plan);
  out.used_fallback = result.used_fallback;
  if (result.backend_failure) {
    rec.status = RecordStatus::kPlanFailed;
    rec.warnings.push_back("plan: " + *result.backend_failure + "; fallback plan attached");
  } else {
    rec.status = RecordStatus::kPlanned;
    if (result.used_fallback) rec.warnings.push_back("plan: all attempts invalid; fallback plan used");
  }
  return finish();
}

ordered_json to_json(const Summary& s) {
  ordered_json counts = ordered_json::object();
  for (auto status : {RecordStatus::kNoDefects, RecordStatus::kPlanned, RecordStatus::kPlanFailed,
                      RecordStatus::kScreenFailed, RecordStatus::kDetectionFailed}) {
    auto it = s.status_counts.find(status);
    counts[std::string(to_string(status))] = it == s.status_counts.end() ? 0 : it->second;
  }
  ordered_json j;
  j["frames"] = s.frames;
  j["status_counts"] = counts;
  j["latency_ms"] = {{"mean", s.mean_total_latency_ms}, {"max", s.max_total_latency_ms}};
  j["validity_rate"] = s.validity_rate;
  j["plan_documents"] = s.plan_documents;
  j["repaired"] = s.repaired;
  j["fallback"] = s.fallback;
  j["mean_overhead_ms"] = s.mean_overhead_ms;
  return j;
}

std::vector<FrameOutcome> process_frames(std::vector<Frame> frames, const Runtime& rt,
                                         const OutcomeCallback& in_order,
                                         const OutcomeCallback& on_complete) {
  std::stable_sort(frames.begin(), frames.end(),
                   [](const Frame& a, const Frame& b) { return a.frame_id < b.frame_id; });
  const std::size_t n = frames.size();
  std::vector<std::optional<FrameOutcome>> slots(n);
  std::mutex mu;
  std::size_t released = 0;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr failure;

  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        FrameOutcome outcome = process_frame(frames[i], rt);
        std::lock_guard lock(mu);
        if (on_complete) on_complete(frames[i], outcome);
        slots[i] = std::move(outcome);
        for (; released < n && slots[released]; ++released) {
          if (in_order) in_order(frames[released], *slots[released]);
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        abort = true;
        return;
      }
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(rt.config.concurrency_limit), n);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < workers; ++k) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<FrameOutcome> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

Summary summarize(const std::vector<FrameOutcome>& outcomes) {
  Summary s;
  s.frames = outcomes.size();
  std::size_t valid = 0;
  double total = 0.0;
  double overhead = 0.0;
  for (const auto& o : outcomes) {
    const auto& r = o.record;
    ++s.status_counts[r.status];
    total += static_cast<double>(r.latencies_ms.total);
    s.max_total_latency_ms = std::max(s.max_total_latency_ms, r.latencies_ms.total);
    overhead += std::chrono::duration<double, std::milli>(o.wall).count() -
                static_cast<double>(o.backend_ms);
    s.plan_documents += o.plan_documents;
    valid += o.valid_plan_documents;
    if (r.plan && r.plan->repaired) ++s.repaired;
    if (o.used_fallback) ++s.fallback;
  }
  if (!outcomes.empty()) {
    s.mean_total_latency_ms = total / static_cast<double>(outcomes.size());
    s.mean_overhead_ms = overhead / static_cast<double>(outcomes.size());
  }
  if (s.plan_documents > 0) {
    s.validity_rate = static_cast<double>(valid) / static_cast<double>(s.plan_documents);
  }
  return s;
}

Summary run_batch(const fs::path& manifest_path, const Runtime& rt, const fs::path& out_path,
                  bool force) {
  std::vector<Frame> frames = load_manifest(manifest_path, rt.config.deterministic);
  if (fs::exists(out_path) && !force) {
    config_error("record log " + out_path.string() + " already exists (use --force to replace it)");
  }
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) config_error("cannot open record log " + out_path.string());

  auto outcomes = process_frames(std::move(frames), rt, [&](const Frame&, const FrameOutcome& o) {
    out << record_line(o.record) << '\n';
    out.flush();
  });
  if (!out) throw Error(ErrorCode::kIo, "failed writing record log " + out_path.string());
  return summarize(outcomes);
}

std::optional<std::string> alert_line(const PipelineRecord& record, const Frame& frame) {
  if (!record.plan) return std::nullopt;
  ordered_json items = ordered_json::array();
  for (const auto& item : record.plan->items) {
    if (item.severity == Severity::kUrgent) items.push_back(to_json(item));
  }
  if (items.empty()) return std::nullopt;
  ordered_json j;
  j["frame_id"] = record.frame_id;
  j["source_id"] = frame.source_id;
  j["timestamp"] = frame.timestamp;
  if (frame.location) {
    j["location"] = {{"lat", frame.location->lat}, {"lon", frame.location->lon}};
  } else {
    j["location"] = nullptr;
  }
  j["status"] = to_string(record.status);
  j["items"] = std::move(items);
  return canonical_dump(j);
}

namespace {

// Complete lines appended to `path` since `offset`; advances the offset.
std::vector<std::string> read_new_lines(const fs::path& path, std::uintmax_t& offset) {
  std::vector<std::string> lines;
  std::ifstream in(path, std::ios::binary);
  if (!in) return lines;
  in.seekg(static_cast<std::streamoff>(offset));
  std::string chunk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  for (std::size_t nl; (nl = chunk.find('\n', pos)) != std::string::npos; pos = nl + 1) {
    lines.push_back(chunk.substr(pos, nl - pos));
  }
  offset += pos;
  return lines;
}

}  // namespace

void run_watch(const fs::path& input_dir, const Runtime& rt, const fs::path& out_path,
               const fs::path& alerts_path, std::stop_token stop) {
  if (!fs::is_directory(input_dir)) config_error("watch directory " + input_dir.string() + " does not exist");
  for (const auto& p : {out_path, alerts_path}) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::app);
  std::ofstream alerts(alerts_path, std::ios::binary | std::ios::app);
  if (!out || !alerts) config_error("cannot open watch output files");

  std::map<fs::path, std::uintmax_t> offsets;
  std::set<std::string> seen;

  auto poll_once = [&] {
    std::vector<fs::path> manifests;
    for (const auto& entry : fs::directory_iterator(input_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
        manifests.push_back(entry.path());
      }
    }
    std::sort(manifests.begin(), manifests.end());
    std::vector<Frame> batch;
    for (const auto& m : manifests) {
      for (const auto& line : read_new_lines(m, offsets[m])) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          json j = json::parse(line, nullptr, false);
          if (j.is_discarded()) config_error("not valid JSON");
          Frame f = manifest_entry(j, m.parent_path(), rt.config.deterministic);
          if (!seen.insert(f.frame_id).second) {
            spdlog::warn("{}: skipping duplicate frame_id '{}'", m.string(), f.frame_id);
            continue;
          }
          batch.push_back(std::move(f));
        } catch (const Error& e) {
          spdlog::error("{}: skipping manifest line: {}", m.string(), e.what());
        }
      }
    }
    if (batch.empty()) return;
    process_frames(
        std::move(batch), rt,
        [&](const Frame&, const FrameOutcome& o) {
          out << record_line(o.record) << '\n';
          out.flush();
        },
        [&](const Frame& f, const FrameOutcome& o) {
          if (auto line = alert_line(o.record, f)) {
            alerts << *line << '\n';
            alerts.flush();
            spdlog::warn("urgent alert for frame {}", f.frame_id);
          }
        });
  };

  constexpr auto kSlice = std::chrono::milliseconds(20);
  while (!stop.stop_requested()) {
    poll_once();
    const auto deadline = Clock::now() + rt.config.poll_interval;
    while (!stop.stop_requested() && Clock::now() < deadline) {
      std::this_thread::sleep_for(std::min<Clock::duration>(kSlice, deadline - Clock::now()));
    }
  }
  out.flush();
  alerts.flush();
}

}  // namespace infragpt::pipeline
