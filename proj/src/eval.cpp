#include "infragpt/eval.hpp"

#include <algorithm>
#include <charconv>
#include <climits>
#include <fstream>
#include <set>

#include "infragpt/errors.hpp"
#include "infragpt/schema.hpp"

namespace infragpt::eval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void input_error(const std::string& message) {
  throw Error(ErrorCode::kEvalInput, message);
}

// Calls fn(json, lineno) for each non-blank line.
template <typename Fn>
void for_each_line(const fs::path& path, Fn fn) {
  std::ifstream in(path);
  if (!in) input_error("cannot read " + path.string());
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (j.is_discarded() || !j.is_object()) input_error(where + ": not a JSON object");
    try {
      fn(j, where);
    } catch (const json::exception& e) {
      input_error(where + ": " + e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kEvalInput) throw;
      input_error(where + ": " + e.what());
    }
  }
}

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<PipelineRecord> load_records(const fs::path& path) {
  std::vector<PipelineRecord> records;
  std::set<std::string> ids;
  for_each_line(path, [&](const json& j, const std::string& where) {
    PipelineRecord r = record_from_json(j);
    if (!ids.insert(r.frame_id).second) input_error(where + ": duplicate frame_id '" + r.frame_id + "'");
    records.push_back(std::move(r));
  });
  return records;
}

std::map<std::string, GroundTruthFrame> load_ground_truth(const fs::path& path) {
  std::map<std::string, GroundTruthFrame> out;
  for_each_line(path, [&](const json& j, const std::string& where) {
    const auto id = j.at("frame_id").get<std::string>();
    const auto& boxes = j.at("boxes");
    const auto& classes = j.at("classes");
    if (!boxes.is_array() || !classes.is_array() || boxes.size() != classes.size()) {
      input_error(where + ": boxes and classes must be arrays of equal length");
    }
    GroundTruthFrame frame;
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      const BBox box = bbox_from_json(boxes[k]);
      if (!is_valid(box)) input_error(where + ": box " + std::to_string(k) + " is not a valid box");
      frame.boxes.push_back({box, classes[k].get<std::string>()});
    }
    if (j.contains("width")) frame.width = j.at("width").get<int>();
    if (j.contains("height")) frame.height = j.at("height").get<int>();
    if (!out.emplace(id, std::move(frame)).second) input_error(where + ": duplicate frame_id '" + id + "'");
  });
  return out;
}

std::vector<Reference> load_references(const fs::path& path) {
  std::vector<Reference> refs;
  for_each_line(path, [&](const json& j, const std::string&) {
    Reference r;
    r.frame_id = j.at("frame_id").get<std::string>();
    r.reference = j.at("reference").get<std::string>();
    if (j.contains("candidate")) r.candidate = j.at("candidate").get<std::string>();
    if (j.contains("subset")) {
      const auto& s = j.at("subset");
      r.subset = s.is_string() ? s.get<std::string>() : s.dump();
    }
    if (j.contains("predicted")) r.predicted = j.at("predicted").get<double>();
    refs.push_back(std::move(r));
  });
  return refs;
}

std::string plan_text(const PipelineRecord& record) {
  if (!record.plan || record.plan->items.empty()) return "No defects detected.";
  std::string out;
  auto sentence = [&](const std::string& s) {
    if (s.empty()) return;
    if (!out.empty()) out.push_back(' ');
    out += s;
    if (s.back() != '.') out.push_back('.');
  };
  for (const auto& item : record.plan->items) {
    sentence(item.type + " of " + std::string(to_string(item.severity)) + " severity");
    sentence(item.risks);
    sentence(item.causes);
    for (const auto& a : item.actions) sentence(a);
    if (!item.tools.empty()) {
      std::string tools = "Tools:";
      for (std::size_t k = 0; k < item.tools.size(); ++k) tools += (k ? ", " : " ") + item.tools[k];
      sentence(tools);
    }
    sentence(item.notes);
  }
  return out;
}

EvalReport evaluate(const std::vector<PipelineRecord>& records,
                    const std::map<std::string, GroundTruthFrame>& ground_truth,
                    const std::vector<Reference>& references, const EvalOptions& options) {
  if (references.empty()) input_error("the reference file has no entries");
  if (options.subset_size == 0) input_error("subset size must be positive");
  std::map<std::string, const PipelineRecord*> by_id;
  for (const auto& r : records) by_id[r.frame_id] = &r;

  EvalReport report;

  // Text quality, one pair per reference line.
  std::vector<std::string> candidates;
  std::vector<std::vector<std::string>> corpus_refs;
  for (const auto& ref : references) {
    std::string candidate;
    if (ref.candidate) {
      candidate = *ref.candidate;
    } else if (auto it = by_id.find(ref.frame_id); it != by_id.end()) {
      candidate = plan_text(*it->second);
    } else {
      input_error("reference for frame '" + ref.frame_id + "' has no record and no candidate");
    }
    candidates.push_back(candidate);
    corpus_refs.push_back({ref.reference});
    report.pairs.push_back(metrics::score_pair(ref.frame_id, std::move(candidate), ref.reference));
  }
  report.macro = *metrics::macro_scores(report.pairs);

  const auto with_predicted = std::count_if(references.begin(), references.end(),
                                            [](const Reference& r) { return r.predicted.has_value(); });
  if (with_predicted != 0 && static_cast<std::size_t>(with_predicted) != references.size()) {
    input_error("either every reference line or none must carry 'predicted'");
  }
  report.parity_source = with_predicted ? "predicted" : "meteor";
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < references.size(); ++k) {
    const auto& p = report.pairs[k];
    const double x = with_predicted ? *references[k].predicted : p.meteor;
    report.parity.push_back({p.id, x, p.rouge_f});
    xs.push_back(x);
    ys.push_back(p.rouge_f);
  }
  const auto r2 = xs.size() >= 2 ? metrics::r_squared(xs, ys) : std::nullopt;

  // Subsets for the delta analysis.
  const auto labelled = std::count_if(references.begin(), references.end(),
                                      [](const Reference& r) { return r.subset.has_value(); });
  if (labelled != 0 && static_cast<std::size_t>(labelled) != references.size()) {
    input_error("either every reference line or none must carry 'subset'");
  }
  std::vector<std::vector<metrics::ScoredPair>> groups;
  for (std::size_t k = 0; k < references.size(); ++k) {
    const std::string label =
        labelled ? *references[k].subset : std::to_string(k / options.subset_size);
    auto it = std::find(report.subset_labels.begin(), report.subset_labels.end(), label);
    if (it == report.subset_labels.end()) {
      report.subset_labels.push_back(label);
      groups.emplace_back();
      it = report.subset_labels.end() - 1;
    }
    groups[static_cast<std::size_t>(it - report.subset_labels.begin())].push_back(report.pairs[k]);
  }
  if (groups.size() >= 2) {
    const auto deltas = metrics::delta_rouge(groups);
    for (std::size_t k = 0; k < deltas.size(); ++k) {
      report.deltas.push_back({report.subset_labels[k], report.subset_labels[k + 1], deltas[k]});
    }
  }

  // Detection quality over the ground-truth frames.
  std::vector<metrics::ImageDetections> images;
  std::set<std::string> classes;
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& [id, gt] : ground_truth) {
    metrics::ImageDetections image;
    image.gts = gt.boxes;
    if (auto it = by_id.find(id); it != by_id.end()) image.preds = it->second->detections;
    for (const auto& g : gt.boxes) classes.insert(g.class_label);
    const auto m = metrics::match_detections(image.preds, image.gts, options.iou_threshold);
    tp += m.true_positives;
    fp += m.false_positives;
    fn += m.false_negatives;
    images.push_back(std::move(image));
  }
  ordered_json ap = ordered_json::object();
  for (const auto& cls : classes) {
    ap[cls] = *metrics::dataset_average_precision(images, cls, options.iou_threshold);
  }
  const auto map = metrics::dataset_map50(images, {classes.begin(), classes.end()});

  // Plan quality.
  std::size_t attempts = 0, accepted = 0, with_plan = 0;
  std::size_t matched = 0, denominator = 0;
  double structural_sum = 0.0;
  std::size_t structural_n = 0;
  std::vector<std::string> documents;
  std::vector<Frame> frames;
  ordered_json status_counts = ordered_json::object();
  for (auto s : {RecordStatus::kNoDefects, RecordStatus::kPlanned, RecordStatus::kPlanFailed,
                 RecordStatus::kScreenFailed, RecordStatus::kDetectionFailed}) {
    status_counts[std::string(to_string(s))] = 0;
  }
  for (const auto& r : records) {
    auto& count = status_counts[std::string(to_string(r.status))];
    count = count.get<int>() + 1;
    for (const auto& a : r.plan_attempts) {
      ++attempts;
      if (a.accepted) ++accepted;
    }
    if (!r.plan) continue;
    ++with_plan;
    Frame f;
    f.frame_id = r.frame_id;
    f.width_px = f.height_px = INT_MAX;
    auto gt = ground_truth.find(r.frame_id);
    if (gt != ground_truth.end()) {
      if (gt->second.width) f.width_px = *gt->second.width;
      if (gt->second.height) f.height_px = *gt->second.height;
      DetectionSet gt_dets;
      for (const auto& g : gt->second.boxes) gt_dets.push_back({g.bbox, g.class_label, 1.0, "gt"});
      const auto sm = schema::structural_match(*r.plan, gt_dets, options.iou_threshold);
      matched += sm.matched;
      denominator += sm.denominator;
      structural_sum += sm.score();
      ++structural_n;
    }
    documents.push_back(canonical_dump(plan_document(*r.plan)));
    frames.push_back(f);
  }

  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? ordered_json(nullptr) : ordered_json(static_cast<double>(a) / static_cast<double>(b));
  };

  ordered_json s;
  s["corpus_size"] = report.pairs.size();
  s["records"] = records.size();
  s["status_counts"] = status_counts;
  s["text"] = {
      {"macro",
       {{"rouge_l_f1", report.macro.rouge_f},
        {"rouge_l_precision", report.macro.rouge_p},
        {"rouge_l_recall", report.macro.rouge_r},
        {"bleu", report.macro.bleu},
        {"meteor", report.macro.meteor}}},
      {"corpus_bleu", metrics::corpus_bleu(candidates, corpus_refs)},
      {"parity", {{"x", report.parity_source}, {"y", "rouge_l_f1"}, {"r_squared", opt(r2)}}},
      {"subsets", report.subset_labels},
      {"delta_rouge_l_f1", [&] {
         ordered_json arr = ordered_json::array();
         for (const auto& d : report.deltas) arr.push_back(d.delta);
         return arr;
       }()}};
  s["detection"] = {{"images", images.size()},
                    {"iou_threshold", options.iou_threshold},
                    {"map50", opt(map)},
                    {"ap50", ap},
                    {"precision", ratio(tp, tp + fp)},
                    {"recall", ratio(tp, tp + fn)},
                    {"true_positives", tp},
                    {"false_positives", fp},
                    {"false_negatives", fn}};
  s["plans"] = {{"with_plan", with_plan},
                {"attempts", attempts},
                {"attempt_validity_rate", ratio(accepted, attempts)},
                {"final_validity_rate", documents.empty()
                                            ? ordered_json(nullptr)
                                            : ordered_json(metrics::validity_rate(documents, frames))},
                {"structural_accuracy_mean",
                 structural_n ? ordered_json(structural_sum / static_cast<double>(structural_n))
                              : ordered_json(nullptr)},
                {"structural_accuracy_pooled", ratio(matched, denominator)}};
  report.summary = std::move(s);
  return report;
}

void write_outputs(const EvalReport& report, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + out_dir.string() + ": " + ec.message());

  {
    auto out = open_out(out_dir / "summary.json");
    out << report.summary.dump(2) << '\n';
  }
  {
    auto out = open_out(out_dir / "per_image_rouge.csv");
    out << "frame_id,rouge_l_precision,rouge_l_recall,rouge_l_f1,bleu,meteor\n";
    for (const auto& p : report.pairs) {
      out << csv_field(p.id) << ',' << num(p.rouge_p) << ',' << num(p.rouge_r) << ','
          << num(p.rouge_f) << ',' << num(p.bleu) << ',' << num(p.meteor) << '\n';
    }
  }
  {
    auto out = open_out(out_dir / "parity.csv");
    out << "frame_id," << report.parity_source << ",rouge_l_f1\n";
    for (const auto& r : report.parity) {
      out << csv_field(r.frame_id) << ',' << num(r.predicted) << ',' << num(r.reference_f1) << '\n';
    }
  }
  {
    auto out = open_out(out_dir / "macro.csv");
    out << "metric,value\n";
    out << "rouge_l_f1," << num(report.macro.rouge_f) << '\n';
    out << "rouge_l_precision," << num(report.macro.rouge_p) << '\n';
    out << "rouge_l_recall," << num(report.macro.rouge_r) << '\n';
    out << "bleu," << num(report.macro.bleu) << '\n';
    out << "meteor," << num(report.macro.meteor) << '\n';
  }
  {
    auto out = open_out(out_dir / "delta_rouge.csv");
    out << "from_subset,to_subset,delta_rouge_l_f1\n";
    for (const auto& d : report.deltas) {
      out << csv_field(d.from) << ',' << csv_field(d.to) << ',' << num(d.delta) << '\n';
    }
  }
}

EvalReport run_eval(const fs::path& records, const fs::path& gt, const fs::path& refs,
                    const fs::path& out_dir, const EvalOptions& options) {
  EvalReport report = evaluate(load_records(records), load_ground_truth(gt), load_references(refs), options);
  write_outputs(report, out_dir);
  return report;
}

}  // namespace infragpt::eval
