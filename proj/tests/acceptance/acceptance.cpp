// Runs every acceptance criterion and prints one PASS/FAIL line per check.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "infragpt/metrics.hpp"
#include "infragpt/pipeline.hpp"
#include "infragpt/schema.hpp"
#include "oracles.hpp"
#include "scenario.hpp"

using namespace infragpt;
using nlohmann::json;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string id(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04d", prefix, i);
  return buf;
}

std::vector<Frame> frames(const char* prefix, int n) {
  std::vector<Frame> out;
  for (int i = 0; i < n; ++i) out.push_back(scenario::frame(id(prefix, i)));
  return out;
}

Outcome ac1_metric_oracles() {
  Outcome o;
  const auto t0 = Clock::now();
  std::ifstream in(scenario::fixtures() / "text_pairs.jsonl");
  int n = 0;
  for (std::string line; std::getline(in, line);) {
    const auto j = json::parse(line);
    const std::string c = j.at("candidate"), r = j.at("reference");
    const std::string tag = j.at("id");
    o.require(oracle::words(c).size() <= 8 && oracle::words(r).size() <= 8, tag + ": pair exceeds 8 tokens");
    o.require(std::abs(metrics::rouge_l(c, r).f1 - oracle::rouge_l(c, r).f) <= 1e-9, tag + ": rouge_l");
    o.require(std::abs(metrics::bleu(c, {r}) - oracle::bleu(c, {r})) <= 1e-9, tag + ": bleu");
    o.require(std::abs(metrics::meteor(c, r) - oracle::meteor(c, r)) <= 1e-9, tag + ": meteor");
    ++n;
  }
  o.require(n >= 20, "fixture corpus has fewer than 20 pairs");
  const double secs = seconds_since(t0);
  o.require(secs < 5.0, "runtime " + std::to_string(secs) + " s");
  o.detail = o.pass ? std::to_string(n) + " pairs in " + std::to_string(secs) + " s" : o.detail;
  return o;
}

Outcome ac2_golden_values() {
  Outcome o;
  o.require(std::abs(metrics::iou({0, 0, 10, 10}, {5, 5, 15, 15}) - 25.0 / 175.0) <= 1e-12, "iou");
  const std::vector<metrics::GroundTruth> gts = {{{0, 0, 10, 10}, "crack"}, {{20, 20, 30, 30}, "crack"}};
  const DetectionSet preds = {{{0, 0, 10, 10}, "crack", 0.9, "m"},
                              {{50, 50, 60, 60}, "crack", 0.8, "m"},
                              {{20, 20, 30, 30}, "crack", 0.7, "m"}};
  const auto ap = metrics::average_precision(preds, gts, "crack");
  o.require(ap && std::abs(*ap - 0.833333) <= 1e-6 && std::abs(*ap - 5.0 / 6.0) <= 1e-9, "average precision");
  o.require(metrics::meteor("the cat", "the cat") == 0.9375, "meteor");
  o.require(std::abs(metrics::bleu("the cat sat", {"the cat sat on the mat"}) - std::exp(-1.0)) <= 1e-9, "bleu");
  o.require(metrics::rouge_l("a c d e", "a b c d").f1 == 0.75, "rouge_l");
  return o;
}

Outcome ac3_ap_property() {
  Outcome o;
  std::mt19937 rng(20240601);
  const std::vector<std::string> classes = {"crack", "leak"};
  std::uniform_int_distribution<int> ngt(0, 5), npred(0, 8), coord(0, 12), ext(1, 6), conf(1, 10);
  auto box = [&] {
    const double x = coord(rng), y = coord(rng);
    return BBox{x, y, x + ext(rng), y + ext(rng)};
  };
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<metrics::GroundTruth> gts;
    std::vector<oracle::Gt> ogts;
    for (int k = ngt(rng); k > 0; --k) {
      const BBox b = box();
      const auto& c = classes[rng() % 2];
      gts.push_back({b, c});
      ogts.push_back({b, c});
    }
    DetectionSet preds;
    for (int k = npred(rng); k > 0; --k) preds.push_back({box(), classes[rng() % 2], conf(rng) / 10.0, "m"});
    for (const auto& c : classes) {
      const auto got = metrics::average_precision(preds, gts, c);
      const double want = oracle::average_precision(preds, ogts, c, 0.5);
      if (want < 0) {
        o.require(!got, "trial " + std::to_string(trial) + ": AP defined without ground truth");
      } else {
        o.require(got && std::abs(*got - want) <= 1e-12, "trial " + std::to_string(trial) + " class " + c);
        ++compared;
      }
    }
  }
  if (o.pass) o.detail = "200 instances, " + std::to_string(compared) + " class APs compared";
  return o;
}

Outcome ac4_gating() {
  Outcome o;
  auto s = std::make_shared<backends::ScriptedBackend>();
  const auto fs = frames("g", 50);
  std::set<std::string> clean;
  for (int i = 0; i < 50; ++i) {
    if (i % 5 < 2) {
      s->set(fs[i].frame_id + "/screen", scenario::kAllZero);
      clean.insert(fs[i].frame_id);
    } else {
      scenario::script_crack_frame(*s, fs[i].frame_id);
    }
  }
  o.require(clean.size() == 20, "scenario must hold 20 all-zero frames");
  const auto rt = scenario::runtime(s, scenario::config(8));
  const auto t0 = Clock::now();
  const auto out = pipeline::process_frames(fs, rt);
  const double secs = seconds_since(t0);
  for (const auto& outcome : out) {
    const auto& r = outcome.record;
    if (clean.count(r.frame_id)) {
      o.require(r.status == RecordStatus::kNoDefects, r.frame_id + " status");
      o.require(s->call_count(r.frame_id, backends::CallKind::kDetect) == 0, r.frame_id + " detector called");
      o.require(s->call_count(r.frame_id, backends::CallKind::kPlan) == 0, r.frame_id + " planner called");
    } else {
      o.require(r.status == RecordStatus::kPlanned, r.frame_id + " should be planned");
    }
  }
  o.require(secs < 2.0, "runtime " + std::to_string(secs) + " s");
  if (o.pass) o.detail = "20/50 gated frames, " + std::to_string(secs) + " s";
  return o;
}

Outcome ac5_repair_loop() {
  Outcome o;
  const std::string valid = scenario::plan_text({scenario::plan_item("crack", {40, 45, 60, 55}, 0.9, "high")});
  const std::string truncated = valid.substr(0, valid.size() / 2);
  const std::string inverted = scenario::plan_text({scenario::plan_item("crack", {60, 55, 40, 45}, 0.9)});
  const std::string missing_items = R"({"plan": "seal it"})";

  auto s = std::make_shared<backends::ScriptedBackend>();
  const auto repaired = frames("r", 30);
  const auto exhausted = frames("x", 30);
  for (const auto& f : repaired) {
    scenario::script_crack_frame(*s, f.frame_id);
    s->set(f.frame_id + "/plan", json::array({truncated, inverted, valid}));
  }
  for (const auto& f : exhausted) {
    scenario::script_crack_frame(*s, f.frame_id);
    s->set(f.frame_id + "/plan", json::array({truncated, inverted, missing_items}));
  }
  auto cfg = scenario::config(8);
  cfg.max_repairs = 2;
  const auto rt = scenario::runtime(s, cfg);
  auto all = repaired;
  all.insert(all.end(), exhausted.begin(), exhausted.end());
  for (const auto& outcome : pipeline::process_frames(all, rt)) {
    const auto& r = outcome.record;
    const bool fallback = r.frame_id[0] == 'x';
    o.require(r.plan.has_value(), r.frame_id + " has no plan");
    if (!r.plan) continue;
    o.require(schema::validate_plan(schema::canonicalize_plan(*r.plan), scenario::frame(r.frame_id), {true}).valid(),
              r.frame_id + " final plan invalid");
    o.require(r.plan->repaired, r.frame_id + " not marked repaired");
    o.require(s->call_count(r.frame_id, backends::CallKind::kPlan) == 3, r.frame_id + " planner calls != 3");
    o.require(outcome.used_fallback == fallback, r.frame_id + " fallback flag");
    if (fallback) {
      o.require(r.plan->items.at(0).notes == "auto-generated fallback", r.frame_id + " not the fallback plan");
    } else {
      o.require(r.plan->raw_text == valid, r.frame_id + " did not keep the valid reply");
    }
  }
  if (o.pass) o.detail = "30 repaired + 30 fallback frames, 3 planner calls each";
  return o;
}

Outcome ac6_structural_accuracy() {
  Outcome o;
  const DetectionSet dets = {{{0, 0, 10, 10}, "crack", 0.9, "m"},
                             {{20, 20, 30, 30}, "leak", 0.8, "m"},
                             {{40, 40, 50, 50}, "crack", 0.7, "m"}};
  MaintenancePlan plan;
  for (const auto& d : dets) {
    ActionItem it;
    it.type = it.class_label = d.class_label;
    it.bbox = d.bbox;
    it.actions = {"inspect"};
    plan.items.push_back(it);
  }
  o.require(schema::structural_accuracy(plan, dets) == 1.0, "full plan");
  MaintenancePlan fewer = plan;
  fewer.items.pop_back();
  o.require(std::abs(schema::structural_accuracy(fewer, dets) - 0.6667) <= 1e-4 &&
                std::abs(schema::structural_accuracy(fewer, dets) - 2.0 / 3.0) <= 1e-9,
            "plan missing one item");
  MaintenancePlan mismatched = plan;
  for (auto& it : mismatched.items) it.class_label = it.class_label == "crack" ? "leak" : "crack";
  o.require(schema::structural_accuracy(mismatched, dets) == 0.0, "class-mismatched plan");
  return o;
}

void script_mixed(backends::ScriptedBackend& s, const std::vector<Frame>& fs) {
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const auto& fid = fs[i].frame_id;
    switch (i % 5) {
      case 0:
        s.set(fid + "/screen", scenario::kAllZero);
        break;
      case 1:
        scenario::script_crack_frame(s, fid, 0.55 + 0.01 * static_cast<double>(i % 40));
        break;
      case 2:
        scenario::script_crack_frame(s, fid);
        s.set(fid + "/plan", json::array({"{", scenario::plan_text({scenario::plan_item("crack", {40, 45, 60, 55}, 0.9)})}));
        break;
      case 3:
        scenario::script_crack_frame(s, fid);
        s.set(fid + "/plan", json::array({"a", "b", "c"}));
        break;
      default:
        s.set(fid + "/screen", json{{"$body", scenario::kLeak}, {"$latency_ms", static_cast<int>(i)}});
        s.set(fid + "/detect", scenario::detect_body({scenario::wire(100, 100, 30, 30, "leak", 0.85),
                                                      scenario::wire(300, 200, 10, 10, "leak", 0.4)}));
        s.set(fid + "/plan", json{{"$error", "unavailable"}});
    }
  }
}

Outcome ac7_determinism() {
  Outcome o;
  scenario::TempDir dir("ac7");
  auto fs = frames("d", 100);
  std::shuffle(fs.begin(), fs.end(), std::mt19937(7));
  scenario::write_manifest(dir / "manifest.jsonl", fs);
  auto run = [&](int concurrency, const std::string& name) {
    auto s = std::make_shared<backends::ScriptedBackend>();
    script_mixed(*s, fs);
    const auto rt = scenario::runtime(s, scenario::config(concurrency, true));
    pipeline::run_batch(dir / "manifest.jsonl", rt, dir / name);
    return scenario::read_file(dir / name);
  };
  const auto a = run(8, "a.jsonl");
  const auto b = run(8, "b.jsonl");
  const auto one = run(1, "one.jsonl");
  o.require(!a.empty(), "empty record log");
  o.require(a == b, "two deterministic runs differ");
  o.require(a == one, "concurrency 1 and 8 differ");
  o.require(scenario::read_lines(dir / "a.jsonl").size() == 100, "record count");
  if (o.pass) o.detail = "100 frames, " + std::to_string(a.size()) + " bytes, identical";
  return o;
}

Outcome ac8_validator_fuzz() {
  Outcome o;
  std::mt19937_64 rng(8);
  const Frame f = scenario::frame("fuzz");
  double worst_ms = 0.0;
  for (int k = 0; k < 10000; ++k) {
    std::string doc(rng() % 512, '\0');
    for (auto& c : doc) c = static_cast<char>(rng() & 0xff);
    const auto t0 = Clock::now();
    try {
      const auto report = schema::validate_plan(doc, f);
      if (report.valid() && !report.syntactic_ok) o.require(false, "inconsistent report");
    } catch (const std::exception& e) {
      o.require(false, std::string("validate_plan threw: ") + e.what());
    }
    const double ms = seconds_since(t0) * 1000.0;
    worst_ms = std::max(worst_ms, ms);
    o.require(ms <= 100.0, "input " + std::to_string(k) + " took " + std::to_string(ms) + " ms");
  }
  if (o.pass) o.detail = "10000 inputs, slowest " + std::to_string(worst_ms) + " ms";
  return o;
}

Outcome ac9_overhead() {
  Outcome o;
  auto s = std::make_shared<backends::ScriptedBackend>();
  const auto fs = frames("o", 1000);
  script_mixed(*s, fs);
  for (std::size_t i = 4; i < fs.size(); i += 5) {
    // Zero latency and no failures: retry backoff would otherwise count as
    // orchestration time.
    s->set(fs[i].frame_id + "/screen", scenario::kLeak);
    s->set(fs[i].frame_id + "/plan",
           scenario::plan_text({scenario::plan_item("leak", {85, 85, 115, 115}, 0.85, "urgent")}));
  }
  const auto rt = scenario::runtime(s, scenario::config(8, false));
  const auto out = pipeline::process_frames(fs, rt);
  double sum = 0.0;
  for (const auto& outcome : out) {
    sum += static_cast<double>(outcome.record.latencies_ms.total) - static_cast<double>(outcome.backend_ms);
  }
  const double mean_ms = sum / static_cast<double>(out.size());
  const double mean_wall = pipeline::summarize(out).mean_overhead_ms;
  o.require(mean_ms < 5.0, "mean overhead " + std::to_string(mean_ms) + " ms");
  o.require(mean_wall < 5.0, "mean wall overhead " + std::to_string(mean_wall) + " ms");
  if (o.pass) o.detail = "mean overhead " + std::to_string(mean_wall) + " ms over 1000 frames";
  return o;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + INFRAGPT_CLI + "\" " + args + " >\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& line : scenario::read_lines(p)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

Outcome ac10_eval_shape() {
  Outcome o;
  scenario::TempDir dir("ac10");
  const auto demo = scenario::demo();
  auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
  const int run = run_cli("run --config " + q(demo / "config.json") + " --manifest " + q(demo / "manifest.jsonl") +
                              " --out " + q(dir / "records.jsonl") + " --deterministic",
                          dir / "run.log");
  o.require(run == 0, "infragpt run exited " + std::to_string(run));
  const int ev = run_cli("eval --records " + q(dir / "records.jsonl") + " --gt " + q(demo / "gt.jsonl") +
                             " --refs " + q(demo / "refs.jsonl") + " --out-dir " + q(dir / "eval"),
                         dir / "eval.log");
  o.require(ev == 0, "infragpt eval exited " + std::to_string(ev));
  if (!o.pass) return o;

  std::size_t corpus = 0;
  std::set<std::string> subsets;
  for (const auto& line : scenario::read_lines(demo / "refs.jsonl")) {
    if (line.empty()) continue;
    ++corpus;
    subsets.insert(json::parse(line).at("subset").get<std::string>());
  }
  for (const char* name : {"per_image_rouge.csv", "parity.csv", "macro.csv", "delta_rouge.csv", "summary.json"}) {
    o.require(fs::exists(dir / "eval" / name), std::string("missing ") + name);
  }
  if (!o.pass) return o;
  const auto per_image = csv_rows(dir / "eval" / "per_image_rouge.csv");
  const auto delta = csv_rows(dir / "eval" / "delta_rouge.csv");
  const auto parity = csv_rows(dir / "eval" / "parity.csv");
  const auto macro = csv_rows(dir / "eval" / "macro.csv");
  o.require(per_image.size() == corpus + 1, "per-image rows " + std::to_string(per_image.size() - 1));
  o.require(parity.size() == corpus + 1, "parity rows " + std::to_string(parity.size() - 1));
  o.require(delta.size() == subsets.size(), "delta rows " + std::to_string(delta.size() - 1));
  o.require(macro.size() == 6, "macro rows");
  if (!o.pass) return o;

  double mean = 0.0;
  for (std::size_t k = 1; k < per_image.size(); ++k) mean += std::stod(per_image[k].at(3));
  mean /= static_cast<double>(corpus);
  const auto summary = json::parse(scenario::read_file(dir / "eval" / "summary.json"));
  const double summary_f1 = summary.at("text").at("macro").at("rouge_l_f1").get<double>();
  const double csv_f1 = std::stod(macro.at(1).at(1));
  o.require(macro.at(1).at(0) == "rouge_l_f1", "macro.csv first metric");
  o.require(std::abs(summary_f1 - mean) <= 1e-9, "summary macro F1 differs from the per-image mean");
  o.require(std::abs(csv_f1 - mean) <= 1e-9, "macro.csv F1 differs from the per-image mean");
  if (o.pass) {
    o.detail = std::to_string(corpus) + " per-image rows, " + std::to_string(delta.size() - 1) +
               " delta rows, macro F1 " + std::to_string(mean);
  }
  return o;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::off);
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria = {
      {"AC1 metric-oracle equivalence", ac1_metric_oracles},
      {"AC2 hand-derived golden values", ac2_golden_values},
      {"AC3 AP brute-force property", ac3_ap_property},
      {"AC4 screening gates detection and planning", ac4_gating},
      {"AC5 repair-loop contract", ac5_repair_loop},
      {"AC6 structural accuracy golden values", ac6_structural_accuracy},
      {"AC7 deterministic record logs", ac7_determinism},
      {"AC8 validator totality fuzz", ac8_validator_fuzz},
      {"AC9 orchestration overhead", ac9_overhead},
      {"AC10 eval harness shape", ac10_eval_shape},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::printf("%s %s%s%s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.empty() ? "" : ": ",
                o.detail.c_str());
  }
  std::fflush(stdout);
  return failures == 0 ? 0 : 1;
}
