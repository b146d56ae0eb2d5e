#include "infragpt/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "infragpt/errors.hpp"
#include "infragpt/schema.hpp"

namespace infragpt::metrics {

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

MatchResult match_detections(const DetectionSet& preds,
                             const std::vector<GroundTruth>& gts,
                             double iou_threshold) {
  MatchResult result;
  result.is_true_positive.assign(preds.size(), false);

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].confidence > preds[b].confidence;
  });

  std::vector<bool> consumed(gts.size(), false);
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t idx : order) {
    const Detection& p = preds[idx];
    double best = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (consumed[g] || gts[g].class_label != p.class_label) continue;
      const double v = iou(p.bbox, gts[g].bbox);
      if (v > best) {
        best = v;
        best_gt = g;
      }
    }
    ++seen;
    if (best_gt < gts.size() && best >= iou_threshold) {
      consumed[best_gt] = true;
      result.is_true_positive[idx] = true;
      ++tp;
    } else {
      ++result.false_positives;
    }
    const double recall = gts.empty() ? 0.0 : static_cast<double>(tp) / gts.size();
    result.pr_points.push_back({recall, static_cast<double>(tp) / seen});
  }
  result.true_positives = tp;
  result.false_negatives = gts.size() - tp;
  return result;
}

double envelope_area(const std::vector<PrPoint>& points) {
  // Walk backwards keeping the running max precision; each recall step is
  // weighted by the best precision attainable at or beyond it.
  std::vector<double> envelope(points.size());
  double running = 0.0;
  for (std::size_t k = points.size(); k-- > 0;) {
    running = std::max(running, points[k].precision);
    envelope[k] = running;
  }
  double area = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    area += (points[k].recall - prev_recall) * envelope[k];
    prev_recall = points[k].recall;
  }
  return area;
}

std::optional<double> average_precision(const DetectionSet& preds,
                                        const std::vector<GroundTruth>& gts,
                                        std::string_view class_label,
                                        double iou_threshold) {
  std::vector<GroundTruth> class_gts;
  for (const auto& g : gts) {
    if (g.class_label == class_label) class_gts.push_back(g);
  }
  if (class_gts.empty()) return std::nullopt;
  DetectionSet class_preds;
  for (const auto& p : preds) {
    if (p.class_label == class_label) class_preds.push_back(p);
  }
  const MatchResult m = match_detections(class_preds, class_gts, iou_threshold);
  return envelope_area(m.pr_points);
}

std::optional<double> map50(const DetectionSet& preds,
                            const std::vector<GroundTruth>& gts,
                            const std::vector<std::string>& class_registry) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& cls : class_registry) {
    if (auto ap = average_precision(preds, gts, cls, 0.5)) {
      sum += *ap;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> dataset_average_precision(const std::vector<ImageDetections>& images,
                                                std::string_view class_label,
                                                double iou_threshold) {
  struct Ranked {
    double confidence;
    bool tp;
  };
  std::vector<Ranked> ranked;
  std::size_t total_gts = 0;
  for (const auto& image : images) {
    std::vector<GroundTruth> gts;
    for (const auto& g : image.gts) {
      if (g.class_label == class_label) gts.push_back(g);
    }
    DetectionSet preds;
    for (const auto& p : image.preds) {
      if (p.class_label == class_label) preds.push_back(p);
    }
    total_gts += gts.size();
    const MatchResult m = match_detections(preds, gts, iou_threshold);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      ranked.push_back({preds[i].confidence, m.is_true_positive[i]});
    }
  }
  if (total_gts == 0) return std::nullopt;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.confidence > b.confidence; });
  std::vector<PrPoint> points;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (ranked[k].tp) ++tp;
    points.push_back({static_cast<double>(tp) / static_cast<double>(total_gts),
                      static_cast<double>(tp) / static_cast<double>(k + 1)});
  }
  return envelope_area(points);
}

std::optional<double> dataset_map50(const std::vector<ImageDetections>& images,
                                    const std::vector<std::string>& class_registry) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& cls : class_registry) {
    if (auto ap = dataset_average_precision(images, cls, 0.5)) {
      sum += *ap;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

// --- text ----------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (const auto& ta : a) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = (ta == b[j - 1]) ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

RougeL rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty() || ref.empty()) return {};
  const double l = static_cast<double>(lcs_length(cand, ref));
  RougeL out;
  out.precision = l / cand.size();
  out.recall = l / ref.size();
  out.f1 = (l == 0.0) ? 0.0
                      : 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

struct BleuStats {
  std::array<std::size_t, 4> clipped{};
  std::array<std::size_t, 4> total{};
  std::size_t cand_len = 0;
  std::size_t ref_len = 0;
};

BleuStats bleu_stats(const std::vector<std::string>& cand,
                     const std::vector<std::vector<std::string>>& refs) {
  BleuStats s;
  s.cand_len = cand.size();
  std::size_t best_diff = std::numeric_limits<std::size_t>::max();
  for (const auto& r : refs) {
    const std::size_t diff = r.size() > cand.size() ? r.size() - cand.size()
                                                    : cand.size() - r.size();
    if (diff < best_diff || (diff == best_diff && r.size() < s.ref_len)) {
      best_diff = diff;
      s.ref_len = r.size();
    }
  }
  for (std::size_t n = 1; n <= 4; ++n) {
    const NgramCounts cand_counts = count_ngrams(cand, n);
    NgramCounts max_ref;
    for (const auto& r : refs) {
      for (const auto& [gram, c] : count_ngrams(r, n)) {
        auto& slot = max_ref[gram];
        slot = std::max(slot, c);
      }
    }
    for (const auto& [gram, c] : cand_counts) {
      auto it = max_ref.find(gram);
      s.clipped[n - 1] += std::min(c, it == max_ref.end() ? std::size_t{0} : it->second);
      s.total[n - 1] += c;
    }
  }
  return s;
}

double bleu_from_stats(const BleuStats& s, std::size_t order) {
  if (order == 0 || s.cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < order; ++n) {
    if (s.total[n] == 0 || s.clipped[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(s.clipped[n]) / s.total[n]);
  }
  double bp = 1.0;
  if (s.cand_len < s.ref_len) {
    bp = std::exp(1.0 - static_cast<double>(s.ref_len) / s.cand_len);
  }
  return bp * std::exp(log_sum / static_cast<double>(order));
}

}  // namespace

double bleu(std::string_view candidate, const std::vector<std::string>& references) {
  const auto cand = tokenize(candidate);
  if (cand.empty() || references.empty()) return 0.0;
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(tokenize(r));
  return bleu_from_stats(bleu_stats(cand, refs), std::min<std::size_t>(4, cand.size()));
}

double corpus_bleu(const std::vector<std::string>& candidates,
                   const std::vector<std::vector<std::string>>& references) {
  if (candidates.size() != references.size()) {
    throw Error(ErrorCode::kPrecondition, "corpus_bleu: candidates/references length mismatch");
  }
  BleuStats pooled;
  std::size_t longest = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto cand = tokenize(candidates[i]);
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : references[i]) refs.push_back(tokenize(r));
    if (refs.empty()) refs.emplace_back();
    const BleuStats s = bleu_stats(cand, refs);
    for (std::size_t n = 0; n < 4; ++n) {
      pooled.clipped[n] += s.clipped[n];
      pooled.total[n] += s.total[n];
    }
    pooled.cand_len += s.cand_len;
    pooled.ref_len += s.ref_len;
    longest = std::max(longest, cand.size());
  }
  return bleu_from_stats(pooled, std::min<std::size_t>(4, longest));
}

namespace {

// Depth-first search over candidate positions. Every maximum alignment
// uses exactly min(count_cand(w), count_ref(w)) links per word type, so the
// search only decides which occurrences link and where; branches that can
// no longer beat the best chunk count are cut.
class ChunkSearch {
 public:
  static constexpr std::size_t kNodeBudget = 2'000'000;

  ChunkSearch(const std::vector<std::string>& cand, const std::vector<std::string>& ref)
      : cand_(cand), ref_(ref) {
    std::unordered_map<std::string, int> ids;
    auto id_of = [&](const std::string& w) {
      auto [it, inserted] = ids.emplace(w, static_cast<int>(ids.size()));
      return it->second;
    };
    for (const auto& w : cand_) cand_ids_.push_back(id_of(w));
    for (const auto& w : ref_) ref_ids_.push_back(id_of(w));
    const std::size_t k = ids.size();
    std::vector<int> cc(k, 0), rc(k, 0);
    for (int id : cand_ids_) ++cc[id];
    for (int id : ref_ids_) ++rc[id];
    quota_.resize(k);
    for (std::size_t w = 0; w < k; ++w) {
      quota_[w] = std::min(cc[w], rc[w]);
      matches_ += static_cast<std::size_t>(quota_[w]);
    }
    ref_positions_.resize(k);
    for (std::size_t p = 0; p < ref_ids_.size(); ++p) {
      ref_positions_[ref_ids_[p]].push_back(static_cast<int>(p));
    }
    // remaining_[i] = occurrences of cand_ids_[i] at positions > i.
    remaining_.assign(cand_ids_.size(), 0);
    std::vector<int> seen(k, 0);
    for (std::size_t i = cand_ids_.size(); i-- > 0;) {
      remaining_[i] = seen[cand_ids_[i]];
      ++seen[cand_ids_[i]];
    }
  }

  MeteorAlignment run() {
    if (matches_ == 0) return {};
    used_.assign(ref_.size(), false);
    linked_.assign(quota_.size(), 0);
    best_ = std::numeric_limits<std::size_t>::max();
    dfs(0, -1, 0);
    return {matches_, best_};
  }

 private:
  void dfs(std::size_t i, int prev_ref, std::size_t chunks) {
    if (chunks >= best_ || nodes_ >= kNodeBudget) return;
    ++nodes_;
    if (i == cand_ids_.size()) {
      best_ = chunks;
      return;
    }
    const int w = cand_ids_[i];
    if (linked_[w] < quota_[w]) {
      auto try_link = [&](int p) {
        used_[p] = true;
        ++linked_[w];
        dfs(i + 1, p, chunks + ((prev_ref >= 0 && p == prev_ref + 1) ? 0 : 1));
        --linked_[w];
        used_[p] = false;
      };
      const int extend = prev_ref + 1;
      if (prev_ref >= 0 && extend < static_cast<int>(ref_ids_.size()) &&
          ref_ids_[extend] == w && !used_[extend]) {
        try_link(extend);
      }
      for (int p : ref_positions_[w]) {
        if (used_[p] || (prev_ref >= 0 && p == extend)) continue;
        try_link(p);
      }
    }
    // Leaving this occurrence unlinked is only allowed if later
    // occurrences can still fill the quota.
    if (linked_[w] + remaining_[i] >= quota_[w]) {
      dfs(i + 1, -1, chunks);
    }
  }

  const std::vector<std::string>& cand_;
  const std::vector<std::string>& ref_;
  std::vector<int> cand_ids_;
  std::vector<int> ref_ids_;
  std::vector<int> quota_;
  std::vector<std::vector<int>> ref_positions_;
  std::vector<int> remaining_;
  std::vector<bool> used_;
  std::vector<int> linked_;
  std::size_t matches_ = 0;
  std::size_t best_ = 0;
  std::size_t nodes_ = 0;
};

}  // namespace

MeteorAlignment meteor_align(const std::vector<std::string>& candidate,
                             const std::vector<std::string>& reference) {
  return ChunkSearch(candidate, reference).run();
}

double meteor(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  const MeteorAlignment a = meteor_align(cand, ref);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / cand.size();
  const double r = m / ref.size();
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

// --- aggregates ----------------------------------------------------------

ScoredPair score_pair(std::string id, std::string candidate, std::string reference) {
  ScoredPair p;
  const RougeL r = rouge_l(candidate, reference);
  p.rouge_p = r.precision;
  p.rouge_r = r.recall;
  p.rouge_f = r.f1;
  p.bleu = bleu(candidate, {reference});
  p.meteor = meteor(candidate, reference);
  p.id = std::move(id);
  p.candidate = std::move(candidate);
  p.reference = std::move(reference);
  return p;
}

std::optional<MacroScores> macro_scores(const std::vector<ScoredPair>& pairs) {
  if (pairs.empty()) return std::nullopt;
  MacroScores m;
  for (const auto& p : pairs) {
    m.rouge_p += p.rouge_p;
    m.rouge_r += p.rouge_r;
    m.rouge_f += p.rouge_f;
    m.bleu += p.bleu;
    m.meteor += p.meteor;
  }
  const double n = static_cast<double>(pairs.size());
  m.rouge_p /= n;
  m.rouge_r /= n;
  m.rouge_f /= n;
  m.bleu /= n;
  m.meteor /= n;
  return m;
}

std::vector<double> delta_rouge(const std::vector<std::vector<ScoredPair>>& subsets) {
  if (subsets.size() < 2) {
    throw Error(ErrorCode::kPrecondition, "delta_rouge needs at least two subsets");
  }
  std::vector<double> f1s;
  for (const auto& s : subsets) {
    auto m = macro_scores(s);
    if (!m) throw Error(ErrorCode::kPrecondition, "delta_rouge: empty subset");
    f1s.push_back(m->rouge_f);
  }
  std::vector<double> deltas;
  for (std::size_t k = 0; k + 1 < f1s.size(); ++k) deltas.push_back(f1s[k + 1] - f1s[k]);
  return deltas;
}

std::optional<double> r_squared(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw Error(ErrorCode::kPrecondition, "r_squared needs two equal-length lists of >= 2 values");
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::min(1.0, (sxy * sxy) / (sxx * syy));
}

double validity_rate(const std::vector<std::string>& documents,
                     const std::vector<Frame>& frames) {
  if (documents.size() != frames.size()) {
    throw Error(ErrorCode::kPrecondition, "validity_rate: documents/frames length mismatch");
  }
  if (documents.empty()) {
    spdlog::warn("validity_rate over an empty document list; reporting 1.0");
    return 1.0;
  }
  std::size_t valid = 0;
  for (std::size_t i = 0; i < documents.size(); ++i) {
    if (schema::validate_plan(documents[i], frames[i]).valid()) ++valid;
  }
  return static_cast<double>(valid) / static_cast<double>(documents.size());
}

}  // namespace infragpt::metrics
