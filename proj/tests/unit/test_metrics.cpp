#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "infragpt/errors.hpp"
#include "infragpt/metrics.hpp"
#include "oracles.hpp"
#include "scenario.hpp"

using namespace infragpt;
using namespace infragpt::metrics;

namespace {

Detection pred(BBox b, const std::string& cls, double conf) { return {b, cls, conf, "m"}; }

std::string random_sentence(std::mt19937& rng, std::size_t max_len) {
  static const char* vocab[] = {"a", "b", "c", "the", "crack", "leak"};
  std::uniform_int_distribution<std::size_t> len(0, max_len), w(0, 5);
  std::string s;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += vocab[w(rng)];
  }
  return s;
}

BBox random_box(std::mt19937& rng) {
  std::uniform_int_distribution<int> c(0, 12), s(1, 6);
  const double x = c(rng), y = c(rng);
  return {x, y, x + s(rng), y + s(rng)};
}

}  // namespace

TEST_CASE("iou") {
  CHECK(iou({0, 0, 10, 10}, {5, 5, 15, 15}) == doctest::Approx(25.0 / 175.0).epsilon(1e-12));
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
  CHECK(iou({0, 0, 10, 10}, {20, 20, 30, 30}) == 0.0);
  CHECK(iou({0, 0, 0, 0}, {0, 0, 0, 0}) == 0.0);

  std::mt19937 rng(5);
  for (int k = 0; k < 1000; ++k) {
    const BBox a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(iou(a, a) == 1.0);
    CHECK(v == doctest::Approx(oracle::iou(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("match_detections") {
  const std::vector<GroundTruth> gt = {{{0, 0, 10, 10}, "crack"}};
  auto m = match_detections({pred({0, 0, 10, 10}, "crack", 0.9)}, gt);
  CHECK(m.true_positives == 1);
  CHECK(m.false_positives == 0);
  CHECK(m.false_negatives == 0);

  m = match_detections({pred({0, 0, 10, 10}, "crack", 0.9), pred({0, 0, 10, 9}, "crack", 0.8)}, gt);
  CHECK(m.true_positives == 1);
  CHECK(m.false_positives == 1);
  CHECK(m.is_true_positive == std::vector<bool>{true, false});

  m = match_detections({pred({0, 0, 10, 10}, "crack", 0.9)}, {{{0, 0, 10, 10}, "leak"}});
  CHECK(m.false_positives == 1);
  CHECK(m.false_negatives == 1);
  CHECK(m.true_positives == 0);
}

TEST_CASE("average_precision examples") {
  const std::vector<GroundTruth> gts = {{{0, 0, 10, 10}, "crack"}, {{20, 20, 30, 30}, "crack"}};
  const DetectionSet perfect = {pred({0, 0, 10, 10}, "crack", 0.9), pred({20, 20, 30, 30}, "crack", 0.8)};
  CHECK(*average_precision(perfect, gts, "crack") == 1.0);

  const DetectionSet tp_fp_tp = {pred({0, 0, 10, 10}, "crack", 0.9), pred({50, 50, 60, 60}, "crack", 0.8),
                                 pred({20, 20, 30, 30}, "crack", 0.7)};
  const auto m = match_detections(tp_fp_tp, gts);
  REQUIRE(m.pr_points.size() == 3);
  CHECK(m.pr_points[0].recall == 0.5);
  CHECK(m.pr_points[0].precision == 1.0);
  CHECK(m.pr_points[1].precision == 0.5);
  CHECK(m.pr_points[2].recall == 1.0);
  CHECK(m.pr_points[2].precision == doctest::Approx(2.0 / 3.0));
  CHECK(*average_precision(tp_fp_tp, gts, "crack") == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0).epsilon(1e-12));

  CHECK(*average_precision({}, gts, "crack") == 0.0);
  CHECK_FALSE(average_precision(perfect, gts, "leak").has_value());
}

TEST_CASE("average_precision matches the brute-force oracle") {
  std::mt19937 rng(2024);
  const std::vector<std::string> classes = {"crack", "leak"};
  std::uniform_int_distribution<int> ngt(0, 5), npred(0, 8), cls(0, 1), conf(1, 6);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<GroundTruth> gts;
    std::vector<oracle::Gt> ogts;
    for (int k = ngt(rng); k > 0; --k) {
      const BBox b = random_box(rng);
      const auto& c = classes[cls(rng)];
      gts.push_back({b, c});
      ogts.push_back({b, c});
    }
    DetectionSet preds;
    for (int k = npred(rng); k > 0; --k) preds.push_back(pred(random_box(rng), classes[cls(rng)], conf(rng) / 6.0));
    for (const auto& c : classes) {
      const auto got = average_precision(preds, gts, c);
      const double want = oracle::average_precision(preds, ogts, c, 0.5);
      if (want < 0) {
        CHECK_FALSE(got.has_value());
      } else {
        REQUIRE(got.has_value());
        CHECK(std::abs(*got - want) <= 1e-12);
      }
    }
  }
}

TEST_CASE("map50") {
  const std::vector<GroundTruth> gts = {{{0, 0, 10, 10}, "crack"}, {{20, 20, 30, 30}, "crack"}};
  const DetectionSet tp_fp_tp = {pred({0, 0, 10, 10}, "crack", 0.9), pred({50, 50, 60, 60}, "crack", 0.8),
                                 pred({20, 20, 30, 30}, "crack", 0.7)};
  CHECK(*map50(tp_fp_tp, gts, {"crack", "leak"}) == doctest::Approx(0.833333).epsilon(1e-6));

  const std::vector<GroundTruth> two = {{{0, 0, 10, 10}, "crack"}, {{0, 0, 10, 10}, "leak"},
                                        {{40, 40, 50, 50}, "leak"}};
  const DetectionSet half = {pred({0, 0, 10, 10}, "crack", 0.9), pred({0, 0, 10, 10}, "leak", 0.9)};
  CHECK(*map50(half, two, {"crack", "leak"}) == doctest::Approx(0.75));
  CHECK(*map50({pred({0, 0, 10, 10}, "crack", 0.9)}, two, {"crack", "leak"}) == doctest::Approx(0.5));
  CHECK_FALSE(map50(half, {}, {"crack"}).has_value());
}

TEST_CASE("dataset AP matches within images only") {
  const DetectionSet preds = {pred({0, 0, 10, 10}, "crack", 0.9), pred({50, 50, 60, 60}, "crack", 0.8),
                              pred({20, 20, 30, 30}, "crack", 0.7)};
  const std::vector<GroundTruth> gts = {{{0, 0, 10, 10}, "crack"}, {{20, 20, 30, 30}, "crack"}};
  CHECK(*dataset_average_precision({{preds, gts}}, "crack") == *average_precision(preds, gts, "crack"));

  // The second image's prediction would match the first image's GT if pooled.
  const std::vector<ImageDetections> images = {{{}, {{{0, 0, 10, 10}, "crack"}}},
                                               {{pred({0, 0, 10, 10}, "crack", 0.9)}, {}}};
  CHECK(*dataset_average_precision(images, "crack") == 0.0);
  CHECK(*dataset_map50(images, {"crack"}) == 0.0);
}

TEST_CASE("tokenize") {
  CHECK(tokenize("The cat, sat!") == std::vector<std::string>{"the", "cat", "sat"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("crack-width 3mm") == std::vector<std::string>{"crack", "width", "3mm"});
}

TEST_CASE("rouge_l") {
  const auto id = rouge_l("seal the crack", "seal the crack");
  CHECK(id.precision == 1.0);
  CHECK(id.recall == 1.0);
  CHECK(id.f1 == 1.0);
  const auto r = rouge_l("a c d e", "a b c d");
  CHECK(r.precision == 0.75);
  CHECK(r.recall == 0.75);
  CHECK(r.f1 == 0.75);
  const auto empty = rouge_l("", "a b");
  CHECK(empty.f1 == 0.0);
  CHECK(empty.precision == 0.0);
}

TEST_CASE("bleu") {
  CHECK(bleu("seal the crack now", {"seal the crack now"}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bleu("the cat sat", {"the cat sat on the mat"}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(bleu("", {"anything"}) == 0.0);
  CHECK(bleu("x y", {"a b"}) == 0.0);
  CHECK(corpus_bleu({"the cat sat"}, {{"the cat sat on the mat"}}) ==
        doctest::Approx(bleu("the cat sat", {"the cat sat on the mat"})).epsilon(1e-12));
  CHECK_THROWS_AS(corpus_bleu({"a"}, {}), Error);
}

TEST_CASE("meteor") {
  CHECK(meteor("the cat", "the cat") == 0.9375);
  CHECK(meteor("cat the", "the cat") == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(meteor("x y", "a b") == 0.0);
  CHECK(meteor("", "a") == 0.0);
  for (std::size_t m = 1; m <= 6; ++m) {
    std::string s;
    for (std::size_t i = 0; i < m; ++i) s += "w" + std::to_string(i) + " ";
    const double expect = 1.0 - 0.5 * std::pow(1.0 / static_cast<double>(m), 3);
    CHECK(meteor(s, s) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("text metrics agree with brute-force oracles on random short texts") {
  std::mt19937 rng(99);
  for (int k = 0; k < 400; ++k) {
    const std::string c = random_sentence(rng, 8), r = random_sentence(rng, 8);
    const auto got = rouge_l(c, r);
    const auto want = oracle::rouge_l(c, r);
    CHECK(std::abs(got.f1 - want.f) <= 1e-12);
    CHECK(std::abs(got.precision - want.p) <= 1e-12);
    CHECK(std::abs(got.recall - want.r) <= 1e-12);
    CHECK(std::abs(bleu(c, {r}) - oracle::bleu(c, {r})) <= 1e-9);
    const std::string r2 = random_sentence(rng, 8);
    CHECK(std::abs(bleu(c, {r, r2}) - oracle::bleu(c, {r, r2})) <= 1e-9);
    CHECK(std::abs(meteor(c, r) - oracle::meteor(c, r)) <= 1e-12);
    CHECK(lcs_length(tokenize(c), tokenize(r)) == oracle::lcs(oracle::words(c), oracle::words(r)));
  }
}

TEST_CASE("text metrics ignore surrounding whitespace and punctuation") {
  std::mt19937 rng(17);
  for (int k = 0; k < 100; ++k) {
    const std::string c = random_sentence(rng, 8), r = random_sentence(rng, 8);
    const std::string c2 = "  ..." + c + "!?  \n", r2 = "\t(" + r + ").";
    CHECK(rouge_l(c, r).f1 == rouge_l(c2, r2).f1);
    CHECK(bleu(c, {r}) == bleu(c2, {r2}));
    CHECK(meteor(c, r) == meteor(c2, r2));
  }
}

TEST_CASE("meteor alignment on long inputs stays fast") {
  std::string a, b;
  for (int i = 0; i < 60; ++i) {
    a += (i % 3 ? "the " : "crack ");
    b += (i % 4 ? "crack " : "the ");
  }
  const double v = meteor(a, b);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);
}

TEST_CASE("macro_scores") {
  CHECK_FALSE(macro_scores({}).has_value());
  const auto one = score_pair("x", "a c d e", "a b c d");
  const auto m1 = *macro_scores({one});
  CHECK(m1.rouge_f == one.rouge_f);
  CHECK(m1.meteor == one.meteor);

  ScoredPair p1, p2;
  p1.rouge_f = 0.2;
  p2.rouge_f = 0.6;
  CHECK(macro_scores({p1, p2})->rouge_f == doctest::Approx(0.4));

  std::mt19937 rng(8);
  std::vector<ScoredPair> pairs;
  for (int k = 0; k < 12; ++k) pairs.push_back(score_pair(std::to_string(k), random_sentence(rng, 8), random_sentence(rng, 8)));
  const auto base = *macro_scores(pairs);
  for (int k = 0; k < 20; ++k) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    const auto m = *macro_scores(pairs);
    CHECK(m.rouge_f == doctest::Approx(base.rouge_f).epsilon(1e-12));
    CHECK(m.bleu == doctest::Approx(base.bleu).epsilon(1e-12));
    CHECK(m.meteor == doctest::Approx(base.meteor).epsilon(1e-12));
  }
}

TEST_CASE("delta_rouge") {
  auto subset = [](std::vector<double> f1s) {
    std::vector<ScoredPair> out;
    for (double f : f1s) {
      ScoredPair p;
      p.rouge_f = f;
      out.push_back(p);
    }
    return out;
  };
  const auto d = delta_rouge({subset({0.3}), subset({0.5}), subset({0.4})});
  REQUIRE(d.size() == 2);
  CHECK(d[0] == doctest::Approx(0.2));
  CHECK(d[1] == doctest::Approx(-0.1));
  for (double v : delta_rouge({subset({0.1, 0.7}), subset({0.1, 0.7})})) CHECK(v == 0.0);
  CHECK_THROWS_AS(delta_rouge({subset({0.3})}), Error);
  CHECK_THROWS_AS(delta_rouge({subset({0.3}), subset({})}), Error);

  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 50; ++k) {
    std::vector<std::vector<ScoredPair>> subsets;
    for (int s = 0; s < 5; ++s) subsets.push_back(subset({u(rng), u(rng), u(rng)}));
    const auto deltas = delta_rouge(subsets);
    double sum = 0;
    for (double v : deltas) sum += v;
    CHECK(sum == doctest::Approx(macro_scores(subsets.back())->rouge_f -
                                 macro_scores(subsets.front())->rouge_f).epsilon(1e-12));
  }
}

TEST_CASE("r_squared") {
  CHECK(*r_squared({1, 2, 3, 4}, {3, 5, 7, 9}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*r_squared({1, 2, 3}, {1, 2, 2}) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK_FALSE(r_squared({1, 2, 3}, {2, 2, 2}).has_value());
  CHECK_THROWS_AS(r_squared({1, 2}, {1}), Error);
  CHECK_THROWS_AS(r_squared({1}, {1}), Error);
}

TEST_CASE("validity_rate") {
  Frame f;
  f.frame_id = "f";
  f.width_px = 100;
  f.height_px = 100;
  const std::string good = scenario::plan_text({scenario::plan_item("crack", {1, 1, 5, 5}, 0.5)});
  CHECK(validity_rate({good, good}, {f, f}) == 1.0);
  CHECK(validity_rate({good, good, good, "{"}, {f, f, f, f}) == 0.75);
  CHECK(validity_rate({}, {}) == 1.0);
  CHECK_THROWS_AS(validity_rate({good}, {}), Error);
}

TEST_CASE("fixture text corpus agrees with oracles") {
  std::ifstream in(scenario::fixtures() / "text_pairs.jsonl");
  int n = 0;
  for (std::string line; std::getline(in, line);) {
    const auto j = nlohmann::json::parse(line);
    const std::string c = j.at("candidate"), r = j.at("reference");
    CHECK(std::abs(rouge_l(c, r).f1 - oracle::rouge_l(c, r).f) <= 1e-9);
    CHECK(std::abs(bleu(c, {r}) - oracle::bleu(c, {r})) <= 1e-9);
    CHECK(std::abs(meteor(c, r) - oracle::meteor(c, r)) <= 1e-9);
    ++n;
  }
  CHECK(n >= 20);
}
