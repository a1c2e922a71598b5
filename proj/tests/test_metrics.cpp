#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "omcl/metrics.hpp"
#include "omcl/rng.hpp"

using namespace omcl;

namespace {

// O(n*m) pair-counting reference: wins count 1, ties count 1/2.
double auroc_bruteforce(const std::vector<double>& known,
                        const std::vector<double>& unknown) {
  double acc = 0.0;
  for (double k : known)
    for (double u : unknown) {
      if (k > u)
        acc += 1.0;
      else if (k == u)
        acc += 0.5;
    }
  return acc / (static_cast<double>(known.size()) * static_cast<double>(unknown.size()));
}

// Recounts CCR/FPR from scratch at every distinct threshold, then applies
// the same trapezoid convention by direct summation.
double oscr_bruteforce(const std::vector<ScoredPrediction>& preds) {
  std::vector<double> ths;
  for (const auto& p : preds) ths.push_back(p.known_score);
  std::sort(ths.begin(), ths.end(), std::greater<>());
  ths.erase(std::unique(ths.begin(), ths.end()), ths.end());

  int64_t n_known = 0, n_unknown = 0;
  for (const auto& p : preds)
    (p.true_class == kUnknownClass ? n_unknown : n_known)++;

  std::vector<std::pair<double, double>> pts;  // (fpr, ccr)
  for (double th : ths) {
    int64_t ok = 0, fp = 0;
    for (const auto& p : preds) {
      if (p.known_score < th) continue;
      if (p.true_class == kUnknownClass)
        ++fp;
      else if (p.predicted_class == p.true_class)
        ++ok;
    }
    pts.emplace_back(static_cast<double>(fp) / static_cast<double>(n_unknown),
                     static_cast<double>(ok) / static_cast<double>(n_known));
  }
  double area = 0.0, px = 0.0, py = pts.front().second;
  for (auto [x, y] : pts) {
    area += (x - px) * 0.5 * (y + py);
    px = x;
    py = y;
  }
  area += (1.0 - px) * py;
  return area;
}

}  // namespace

TEST_CASE("closed accuracy basics") {
  std::vector<ScoredPrediction> all_right{{0.9, 1, 1}, {0.8, 2, 2}};
  CHECK(closed_accuracy(all_right) == 1.0);

  std::vector<ScoredPrediction> half{{0.9, 1, 1}, {0.8, 2, 1}};
  CHECK(closed_accuracy(half) == 0.5);

  CHECK_THROWS_AS(closed_accuracy({}), Error);
  std::vector<ScoredPrediction> only_unknown{{0.5, 1, kUnknownClass}};
  CHECK_THROWS_AS(closed_accuracy(only_unknown), Error);
}

TEST_CASE("closed accuracy of a uniform random predictor approaches 1/C") {
  Rng rng(2024);
  const int c = 4, n = 10000;
  std::vector<ScoredPrediction> preds;
  preds.reserve(n);
  for (int i = 0; i < n; ++i)
    preds.push_back(ScoredPrediction{0.5, static_cast<int>(rng.below(c)) + 1,
                                     static_cast<int>(rng.below(c)) + 1});
  CHECK(closed_accuracy(preds) == doctest::Approx(0.25).epsilon(0.08));
}

TEST_CASE("auroc worked examples") {
  CHECK(auroc({0.9, 0.8}, {0.3}) == 1.0);
  CHECK(auroc({0.9, 0.2}, {0.5}) == 0.5);
  CHECK(auroc({0.5}, {0.5}) == 0.5);
  CHECK_THROWS_AS(auroc({}, {0.5}), Error);
  CHECK_THROWS_AS(auroc({0.5}, {}), Error);
}

TEST_CASE("oscr worked examples") {
  std::vector<ScoredPrediction> ex{{0.9, 1, 1}, {0.8, 2, 1}, {0.5, 1, kUnknownClass}};
  CHECK(oscr(ex) == doctest::Approx(0.5).epsilon(1e-15));

  std::vector<ScoredPrediction> perfect{
      {0.9, 1, 1}, {0.8, 2, 2}, {0.3, 1, kUnknownClass}, {0.2, 2, kUnknownClass}};
  CHECK(oscr(perfect) == doctest::Approx(1.0).epsilon(1e-15));

  std::vector<ScoredPrediction> all_wrong{{0.9, 2, 1}, {0.5, 1, kUnknownClass}};
  CHECK(oscr(all_wrong) == 0.0);

  CHECK_THROWS_AS(oscr({{0.9, 1, 1}}), Error);
}

TEST_CASE("metrics match brute-force oracles on random instances with ties") {
  Rng rng(77);
  for (int iter = 0; iter < 100; ++iter) {
    const int nk = 1 + static_cast<int>(rng.below(100));
    const int nu = 1 + static_cast<int>(rng.below(100));
    std::vector<ScoredPrediction> preds;
    std::vector<double> ks, us;
    for (int i = 0; i < nk; ++i) {
      // quantized scores force duplicate values across both groups
      const double s = static_cast<double>(rng.below(12)) / 11.0;
      const int truth = 1 + static_cast<int>(rng.below(3));
      const int pred = 1 + static_cast<int>(rng.below(3));
      preds.push_back(ScoredPrediction{s, pred, truth});
      ks.push_back(s);
    }
    for (int i = 0; i < nu; ++i) {
      const double s = static_cast<double>(rng.below(12)) / 11.0;
      preds.push_back(ScoredPrediction{s, 1 + static_cast<int>(rng.below(3)),
                                       kUnknownClass});
      us.push_back(s);
    }
    CHECK(std::fabs(auroc(ks, us) - auroc_bruteforce(ks, us)) < 1e-12);
    CHECK(std::fabs(oscr(preds) - oscr_bruteforce(preds)) < 1e-12);
  }
}

TEST_CASE("auroc properties") {
  Rng rng(31);
  std::vector<double> ks, us;
  for (int i = 0; i < 40; ++i) ks.push_back(rng.uniform());
  for (int i = 0; i < 25; ++i) us.push_back(rng.uniform());

  SUBCASE("invariant under strictly increasing transforms") {
    auto mapped = [](std::vector<double> v) {
      for (double& x : v) x = std::exp(3.0 * x) + 1.0;
      return v;
    };
    CHECK(auroc(ks, us) == doctest::Approx(auroc(mapped(ks), mapped(us))).epsilon(1e-12));
  }
  SUBCASE("swapping roles complements the value") {
    CHECK(auroc(ks, us) + auroc(us, ks) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("oscr never exceeds closed accuracy") {
  Rng rng(55);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<ScoredPrediction> preds;
    const int nk = 2 + static_cast<int>(rng.below(50));
    const int nu = 1 + static_cast<int>(rng.below(50));
    for (int i = 0; i < nk; ++i)
      preds.push_back(ScoredPrediction{rng.uniform(), 1 + static_cast<int>(rng.below(4)),
                                       1 + static_cast<int>(rng.below(4))});
    for (int i = 0; i < nu; ++i)
      preds.push_back(ScoredPrediction{rng.uniform(), 1 + static_cast<int>(rng.below(4)),
                                       kUnknownClass});
    CHECK(oscr(preds) <= closed_accuracy(preds) + 1e-12);
  }
}

TEST_CASE("aggregate over trials") {
  EvalReport a;
  a.trial = 0;
  a.acc_c = 0.8;
  a.auroc_o = 0.7;
  a.oscr_o = 0.6;
  a.config_digest = "x";

  SUBCASE("single trial: mean is the trial, std 0") {
    auto agg = aggregate_trials({a});
    CHECK(agg.acc_c.mean == 0.8);
    CHECK(agg.acc_c.stddev == 0.0);
    CHECK(agg.trials == 1);
  }
  SUBCASE("two trials") {
    EvalReport b = a;
    b.trial = 1;
    b.acc_c = 0.9;
    auto agg = aggregate_trials({a, b});
    CHECK(agg.acc_c.mean == doctest::Approx(0.85).epsilon(1e-15));
  }
  SUBCASE("five random trials match a re-summation") {
    Rng rng(8);
    std::vector<EvalReport> rs;
    double sum = 0.0;
    for (int i = 0; i < 5; ++i) {
      EvalReport r = a;
      r.trial = i;
      r.acc_c = rng.uniform();
      sum += r.acc_c;
      rs.push_back(r);
    }
    auto agg = aggregate_trials(rs);
    const double mean = sum / 5.0;
    double sq = 0.0;
    for (const auto& r : rs) sq += (r.acc_c - mean) * (r.acc_c - mean);
    CHECK(agg.acc_c.mean == doctest::Approx(mean).epsilon(1e-15));
    CHECK(agg.acc_c.stddev == doctest::Approx(std::sqrt(sq / 4.0)).epsilon(1e-12));
  }
  SUBCASE("mixed digests rejected") {
    EvalReport b = a;
    b.config_digest = "y";
    CHECK_THROWS_AS(aggregate_trials({a, b}), Error);
  }
}

TEST_CASE("report json round trip") {
  EvalReport r;
  r.trial = 3;
  r.acc_c = 0.91;
  r.auroc_o = 0.84;
  r.oscr_o = 0.80;
  r.n_known = 400;
  r.n_unknown = 300;
  r.config_digest = "deadbeef01234567";
  EvalReport back = report_from_json_text(report_to_json(r));
  CHECK(back.trial == r.trial);
  CHECK(back.acc_c == r.acc_c);
  CHECK(back.auroc_o == r.auroc_o);
  CHECK(back.oscr_o == r.oscr_o);
  CHECK(back.n_known == r.n_known);
  CHECK(back.config_digest == r.config_digest);
}

TEST_CASE("curve csv header and roc reuse") {
  auto curve = roc_curve({0.9, 0.8}, {0.3});
  const std::string csv = curve_csv(curve);
  CHECK(csv.rfind("threshold,fpr,ccr\n", 0) == 0);
  CHECK(area_under(curve) == 1.0);
}
