#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "infragpt/backends.hpp"
#include "infragpt/detection.hpp"
#include "infragpt/domain.hpp"
#include "infragpt/planning.hpp"
#include "infragpt/screening.hpp"

namespace infragpt::pipeline {

enum class Mode { kBatch, kWatch };

struct PipelineConfig {
  std::string vlm_endpoint = "mock";  // URL, or "mock" for the scripted backend
  std::string vlm_model = "vlm";
  std::optional<std::filesystem::path> script;  // required by any "mock" endpoint
  detection::DetectorRegistry detectors;
  std::optional<std::filesystem::path> screening_template;  // compiled-in default when unset
  std::optional<std::filesystem::path> planning_template;
  std::optional<std::filesystem::path> fallback_table;
  int max_repairs = 2;
  int concurrency_limit = 8;
  int endpoint_concurrency = 4;
  bool deterministic = false;
  std::optional<std::filesystem::path> output_path;
  Mode mode = Mode::kBatch;
  std::chrono::milliseconds poll_interval{1000};
  std::map<std::string, double> pixels_per_meter;  // keyed by source_id
  int max_tokens = 1024;
  int screen_max_tokens = 256;
  double temperature = 0.0;
};

void check_config(const PipelineConfig& config);

/// Relative paths resolve against base_dir. Unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j,
                                const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Reads width/height from a PNG or JPEG header. Throws kIo.
std::pair<int, int> probe_image_size(const std::filesystem::path& path);

/// One manifest line: frame_id, path (or image_path), source_id, timestamp,
/// optional location {lat, lon}, optional width/height. Relative paths
/// resolve against base_dir; missing dimensions are probed from the image.
Frame manifest_entry(const nlohmann::json& j, const std::filesystem::path& base_dir,
                     bool deterministic);

/// Throws kConfig on an unreadable manifest, a bad line, or duplicate ids.
std::vector<Frame> load_manifest(const std::filesystem::path& path, bool deterministic);

struct Backends {
  std::shared_ptr<backends::VlmBackend> vlm;
  std::shared_ptr<backends::DetectorBackend> detector;
  // Set when any endpoint is "mock"; exposes call accounting.
  std::shared_ptr<backends::ScriptedBackend> scripted;
};

Backends make_backends(const PipelineConfig& config);

// A validated config with its templates and lookup tables loaded.
struct Runtime {
  PipelineConfig config;
  screening::PromptTemplate screening_template;
  screening::PromptTemplate planning_template;
  planning::FallbackTable fallback;
  Backends backends;
  backends::RetryPolicy retry;
};

Runtime make_runtime(PipelineConfig config);
Runtime make_runtime(PipelineConfig config, Backends backends);

struct FrameOutcome {
  PipelineRecord record;
  std::chrono::nanoseconds wall{0};
  std::int64_t backend_ms = 0;  // summed backend-reported latencies
  std::size_t plan_documents = 0;
  std::size_t valid_plan_documents = 0;
  bool used_fallback = false;
};

/// Screens, detects and plans one frame. Backend failures become failure records;
/// a missing script entry propagates.
FrameOutcome process_frame(const Frame& frame, const Runtime& runtime);

struct Summary {
  std::size_t frames = 0;
  std::map<RecordStatus, std::size_t> status_counts;
  double mean_total_latency_ms = 0.0;
  std::int64_t max_total_latency_ms = 0;
  double validity_rate = 1.0;  // over every planner output
  std::size_t plan_documents = 0;
  std::size_t repaired = 0;
  std::size_t fallback = 0;
  double mean_overhead_ms = 0.0;  // wall time minus backend time
};

ordered_json to_json(const Summary& summary);

using OutcomeCallback = std::function<void(const Frame&, const FrameOutcome&)>;

/// Processes frames in a bounded worker pool and returns outcomes in
/// frame_id order. `in_order` sees each outcome in that order as soon as
/// every earlier frame has completed; `on_complete` sees it the moment it
/// finishes. Callbacks are serialized.
std::vector<FrameOutcome> process_frames(std::vector<Frame> frames, const Runtime& runtime,
                                         const OutcomeCallback& in_order = {},
                                         const OutcomeCallback& on_complete = {});

Summary summarize(const std::vector<FrameOutcome>& outcomes);

/// Writes the record log; refuses an existing file unless force is set.
Summary run_batch(const std::filesystem::path& manifest_path, const Runtime& runtime,
                  const std::filesystem::path& out_path, bool force = false);

/// Line appended to the alerts log for a record with an urgent item, or
/// nullopt when it has none.
std::optional<std::string> alert_line(const PipelineRecord& record, const Frame& frame);

/// Polls input_dir for *.jsonl manifests and processes each newly completed
/// line, appending records to out_path and urgent alerts to alerts_path.
/// Returns after the stop token fires and in-flight frames have finished.
void run_watch(const std::filesystem::path& input_dir, const Runtime& runtime,
               const std::filesystem::path& out_path, const std::filesystem::path& alerts_path,
               std::stop_token stop);

}  // namespace infragpt::pipeline
