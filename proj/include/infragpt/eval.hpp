#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "infragpt/domain.hpp"
#include "infragpt/metrics.hpp"

namespace infragpt::eval {

struct Reference {
  std::string frame_id;
  std::string reference;
  std::optional<std::string> candidate;  // overrides the text derived from the plan
  std::optional<std::string> subset;     // grouping for the delta analysis
  std::optional<double> predicted;       // x column of the parity analysis
};

struct GroundTruthFrame {
  std::vector<metrics::GroundTruth> boxes;
  std::optional<int> width;
  std::optional<int> height;
};

// Loaders throw kEvalInput on unreadable files or malformed lines.
std::vector<PipelineRecord> load_records(const std::filesystem::path& path);
std::map<std::string, GroundTruthFrame> load_ground_truth(const std::filesystem::path& path);
std::vector<Reference> load_references(const std::filesystem::path& path);

/// Text compared against a reference summary: each plan item's fields in
/// schema order, one sentence per item.
std::string plan_text(const PipelineRecord& record);

struct EvalOptions {
  std::size_t subset_size = 5;  // used when references carry no subset labels
  double iou_threshold = 0.5;
};

struct ParityRow {
  std::string frame_id;
  double predicted = 0.0;
  double reference_f1 = 0.0;
};

struct DeltaRow {
  std::string from;
  std::string to;
  double delta = 0.0;
};

struct EvalReport {
  std::vector<metrics::ScoredPair> pairs;  // one per reference line
  std::vector<ParityRow> parity;
  std::string parity_source;  // "predicted" or "meteor"
  metrics::MacroScores macro;
  std::vector<std::string> subset_labels;
  std::vector<DeltaRow> deltas;
  ordered_json summary;
};

EvalReport evaluate(const std::vector<PipelineRecord>& records,
                    const std::map<std::string, GroundTruthFrame>& ground_truth,
                    const std::vector<Reference>& references, const EvalOptions& options = {});

/// summary.json, per_image_rouge.csv, parity.csv, macro.csv, delta_rouge.csv
void write_outputs(const EvalReport& report, const std::filesystem::path& out_dir);

EvalReport run_eval(const std::filesystem::path& records, const std::filesystem::path& gt,
                    const std::filesystem::path& refs, const std::filesystem::path& out_dir,
                    const EvalOptions& options = {});

}  // namespace infragpt::eval
