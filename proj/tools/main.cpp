#include <atomic>
#include <csignal>
#include <exception>
#include <fstream>
#include <iostream>
#include <iterator>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "infragpt/errors.hpp"
#include "infragpt/eval.hpp"
#include "infragpt/pipeline.hpp"
#include "infragpt/schema.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kStartupError = 1;
constexpr int kEvalInputError = 2;
constexpr int kInvalidPlan = 3;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

namespace pl = infragpt::pipeline;

int cmd_run(const std::string& config_path, const std::string& manifest, const std::string& out,
            bool deterministic, bool force) {
  pl::PipelineConfig config = pl::load_config(config_path);
  if (deterministic) config.deterministic = true;
  const pl::Runtime runtime = pl::make_runtime(std::move(config));
  const pl::Summary summary = pl::run_batch(manifest, runtime, out, force);
  std::cout << pl::to_json(summary).dump(2) << '\n';
  return kOk;
}

int cmd_watch(const std::string& config_path, const std::string& dir, const std::string& out,
              const std::string& alerts) {
  const pl::Runtime runtime = pl::make_runtime(pl::load_config(config_path));
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  std::exception_ptr failure;
  std::atomic<bool> finished{false};
  std::jthread worker([&](std::stop_token stop) {
    try {
      pl::run_watch(dir, runtime, out, alerts, stop);
    } catch (...) {
      failure = std::current_exception();
    }
    finished = true;
  });
  spdlog::info("watching {} (Ctrl-C to stop)", dir);
  while (!g_stop && !finished) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  worker.request_stop();
  worker.join();
  if (failure) std::rethrow_exception(failure);
  spdlog::info("watch stopped");
  return kOk;
}

int cmd_validate(const std::string& plan_path, int width, int height, bool require_items) {
  std::ifstream in(plan_path, std::ios::binary);
  if (!in) throw infragpt::Error(infragpt::ErrorCode::kIo, "cannot read plan " + plan_path);
  const std::string doc((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  infragpt::Frame frame;
  frame.frame_id = plan_path;
  frame.width_px = width;
  frame.height_px = height;
  infragpt::check_frame(frame);
  const auto report = infragpt::schema::validate_plan(doc, frame, {.require_items = require_items});
  std::cout << infragpt::schema::to_json(report).dump(2) << '\n';
  return report.valid() ? kOk : kInvalidPlan;
}

int cmd_eval(const std::string& records, const std::string& gt, const std::string& refs,
             const std::string& out_dir, std::size_t subset_size) {
  infragpt::eval::EvalOptions options;
  options.subset_size = subset_size;
  try {
    const auto report = infragpt::eval::run_eval(records, gt, refs, out_dir, options);
    std::cout << report.summary.dump(2) << '\n';
  } catch (const infragpt::Error& e) {
    if (e.code() == infragpt::ErrorCode::kIo) throw;
    spdlog::error("{}", e.what());
    return kEvalInputError;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("infragpt"));

  CLI::App app{"Infrastructure defect screening, detection and maintenance planning"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string config, manifest, out, dir, alerts, plan, records, gt, refs, out_dir;
  bool deterministic = false, force = false, require_items = false;
  int width = 0, height = 0;
  std::size_t subset_size = 5;

  auto* run = app.add_subcommand("run", "Process a manifest in batch mode");
  run->add_option("--config", config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--manifest", manifest, "Frame manifest (JSON lines)")->required();
  run->add_option("--out", out, "Record log to write")->required();
  run->add_flag("--deterministic", deterministic, "Manifest timestamps, zero retry backoff");
  run->add_flag("--force", force, "Replace an existing record log");

  auto* watch = app.add_subcommand("watch", "Poll a directory of manifests and raise alerts");
  watch->add_option("--config", config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  watch->add_option("--dir", dir, "Directory of *.jsonl manifests")->required();
  watch->add_option("--out", out, "Record log to append to")->required();
  watch->add_option("--alerts", alerts, "Alerts log to append to")->required();

  auto* validate = app.add_subcommand("validate", "Validate a maintenance plan against the schema");
  validate->add_option("--plan", plan, "Plan document")->required();
  validate->add_option("--width", width, "Frame width in pixels")->required()->check(CLI::PositiveNumber);
  validate->add_option("--height", height, "Frame height in pixels")->required()->check(CLI::PositiveNumber);
  validate->add_flag("--require-items", require_items, "Reject an empty items array");

  auto* eval = app.add_subcommand("eval", "Score a record log against ground truth and references");
  eval->add_option("--records", records, "Record log")->required();
  eval->add_option("--gt", gt, "Ground truth (JSON lines)")->required();
  eval->add_option("--refs", refs, "Reference summaries (JSON lines)")->required();
  eval->add_option("--out-dir", out_dir, "Output directory")->required();
  eval->add_option("--subset-size", subset_size, "Pairs per subset when references carry no subset label")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kStartupError;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*run) return cmd_run(config, manifest, out, deterministic, force);
    if (*watch) return cmd_watch(config, dir, out, alerts);
    if (*validate) return cmd_validate(plan, width, height, require_items);
    if (*eval) return cmd_eval(records, gt, refs, out_dir, subset_size);
  } catch (const infragpt::Error& e) {
    spdlog::error("{}: {}", infragpt::to_string(e.code()), e.what());
    return kStartupError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kStartupError;
  }
  return kStartupError;
}
