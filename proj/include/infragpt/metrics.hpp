#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "infragpt/domain.hpp"

namespace infragpt::metrics {

// --- detection quality ---------------------------------------------------

/// Intersection over union; 0 when the union has zero area.
double iou(const BBox& a, const BBox& b);

struct GroundTruth {
  BBox bbox;
  std::string class_label;
};

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct MatchResult {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  // One point per prediction, in descending confidence.
  std::vector<PrPoint> pr_points;
  // Per prediction (in input order): true if it was a true positive.
  std::vector<bool> is_true_positive;
};

/// Class-strict greedy matching. Predictions are visited in descending
/// confidence (input order breaks ties); each claims its best-IoU unmatched
/// ground truth of the same class if that IoU reaches the threshold.
MatchResult match_detections(const DetectionSet& preds,
                             const std::vector<GroundTruth>& gts,
                             double iou_threshold = 0.5);

/// All-point interpolated AP for one class. nullopt when the class has no
/// ground truths.
std::optional<double> average_precision(const DetectionSet& preds,
                                        const std::vector<GroundTruth>& gts,
                                        std::string_view class_label,
                                        double iou_threshold = 0.5);

/// Area under the monotone precision envelope of a PR sequence.
double envelope_area(const std::vector<PrPoint>& points);

/// Unweighted mean AP@0.5 over registry classes that have ground truths.
std::optional<double> map50(const DetectionSet& preds,
                            const std::vector<GroundTruth>& gts,
                            const std::vector<std::string>& class_registry);

// Predictions and ground truths of one image.
struct ImageDetections {
  DetectionSet preds;
  std::vector<GroundTruth> gts;
};

/// AP over many images: matching happens within each image, ranking across
/// all of them. A single image reduces to average_precision.
std::optional<double> dataset_average_precision(const std::vector<ImageDetections>& images,
                                                std::string_view class_label,
                                                double iou_threshold = 0.5);

std::optional<double> dataset_map50(const std::vector<ImageDetections>& images,
                                    const std::vector<std::string>& class_registry);

// --- text quality --------------------------------------------------------

/// Lowercased maximal runs of ASCII letters/digits.
std::vector<std::string> tokenize(std::string_view text);

struct RougeL {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b);

RougeL rouge_l(std::string_view candidate, std::string_view reference);

/// Sentence BLEU with order N = min(4, |candidate|) and uniform weights.
double bleu(std::string_view candidate, const std::vector<std::string>& references);

/// Corpus BLEU: same formula over n-gram counts and lengths pooled across
/// segments.
double corpus_bleu(const std::vector<std::string>& candidates,
                   const std::vector<std::vector<std::string>>& references);

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

/// Exact-match alignment: maximum matches, then minimum chunks.
MeteorAlignment meteor_align(const std::vector<std::string>& candidate,
                             const std::vector<std::string>& reference);

double meteor(std::string_view candidate, std::string_view reference);

// --- aggregate analyses --------------------------------------------------

struct ScoredPair {
  std::string id;
  std::string candidate;
  std::string reference;
  double rouge_p = 0.0;
  double rouge_r = 0.0;
  double rouge_f = 0.0;
  double bleu = 0.0;
  double meteor = 0.0;
};

ScoredPair score_pair(std::string id, std::string candidate, std::string reference);

struct MacroScores {
  double rouge_p = 0.0;
  double rouge_r = 0.0;
  double rouge_f = 0.0;
  double bleu = 0.0;
  double meteor = 0.0;
};

std::optional<MacroScores> macro_scores(const std::vector<ScoredPair>& pairs);

/// delta_k = macroF1(subset k+1) - macroF1(subset k). Throws kPrecondition
/// with fewer than two subsets or an empty subset.
std::vector<double> delta_rouge(const std::vector<std::vector<ScoredPair>>& subsets);

/// Squared Pearson correlation; nullopt when either side has zero variance.
std::optional<double> r_squared(const std::vector<double>& xs,
                                const std::vector<double>& ys);

/// Fraction of documents that validate against their frame. An empty list
/// scores 1.0 and logs a warning.
double validity_rate(const std::vector<std::string>& documents,
                     const std::vector<Frame>& frames);

}  // namespace infragpt::metrics
